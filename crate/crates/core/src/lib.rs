pub mod census;
pub mod cluster;
pub mod engine;
pub mod frame;
pub mod geometry;
pub mod io;
pub mod kinetic;
pub mod linked;
pub mod scalar;
pub mod tournament;
pub mod wbtree;
