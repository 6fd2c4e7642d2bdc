//! Weighted points, their growing squares, and the pure predicates built on them.
//!
//! The square of a point `p` at time `t` is centred at `(p.x, p.y)` and has
//! width `t * p.w`. Squares are closed: boundary contact counts as intersection.
//! Where two coordinates are exactly equal, comparisons fall back to the point
//! id, which acts as a symbolic perturbation of the input.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::kinetic::LinearMotion;
use crate::scalar::Scalar;

/// Identifier of a glyph. Never reused within one simulation run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PointId(pub u64);

impl std::fmt::Display for PointId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedPoint<S> {
    pub id: PointId,
    pub x: S,
    pub y: S,
    /// Growth rate of the square's width; strictly positive.
    pub w: S,
}

impl<S: Scalar> WeightedPoint<S> {
    pub fn new(id: u64, x: S, y: S, w: S) -> Self {
        WeightedPoint {
            id: PointId(id),
            x,
            y,
            w,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CornerKind {
    LowerLeft,
    UpperRight,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
}

/// Trajectory of one coordinate of a square corner.
pub fn corner_motion<S: Scalar>(p: &WeightedPoint<S>, corner: CornerKind, axis: Axis) -> LinearMotion<S> {
    let a = match axis {
        Axis::X => p.x.clone(),
        Axis::Y => p.y.clone(),
    };
    let half = p.w.half();
    let b = match corner {
        CornerKind::LowerLeft => half.neg(),
        CornerKind::UpperRight => half,
    };
    LinearMotion { a, b }
}

/// Position along the slope -1 line; constant over time for every corner.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaKey<S> {
    pub value: S,
    pub tiebreak: PointId,
}

impl<S: Scalar> GammaKey<S> {
    pub fn cmp_key(&self, other: &Self) -> Ordering {
        self.value
            .cmp_exact(&other.value)
            .then(self.tiebreak.cmp(&other.tiebreak))
    }
}

pub fn gamma_key<S: Scalar>(p: &WeightedPoint<S>) -> GammaKey<S> {
    GammaKey {
        value: p.x.sub(&p.y),
        tiebreak: p.id,
    }
}

fn cmp_perturbed<S: Scalar>(a: &S, ida: PointId, b: &S, idb: PointId) -> Ordering {
    a.cmp_exact(b).then(ida.cmp(&idb))
}

/// `p` dominates `q`: `q.x <= p.x` and `q.y <= p.y` (ties broken by id).
pub fn dominates<S: Scalar>(p: &WeightedPoint<S>, q: &WeightedPoint<S>) -> bool {
    cmp_perturbed(&q.x, q.id, &p.x, p.id) != Ordering::Greater
        && cmp_perturbed(&q.y, q.id, &p.y, p.id) != Ordering::Greater
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DominanceClass {
    NotDominating,
    /// `p` dominates `q` and precedes it along the gamma line; its square
    /// first reaches the top edge of `q`'s square.
    DMinus,
    /// `p` dominates `q` and follows it along the gamma line; first contact is
    /// through the right edge.
    DPlus,
}

pub fn classify<S: Scalar>(p: &WeightedPoint<S>, q: &WeightedPoint<S>) -> DominanceClass {
    if !dominates(p, q) {
        return DominanceClass::NotDominating;
    }
    match gamma_key(p).cmp_key(&gamma_key(q)) {
        Ordering::Less => DominanceClass::DMinus,
        _ => DominanceClass::DPlus,
    }
}

/// Half the Chebyshev distance scaled by the combined growth:
/// `2 * max(|dx|, |dy|) / (w_p + w_q)`, the first time the closed squares meet.
pub fn pairwise_intersection_time<S: Scalar>(p: &WeightedPoint<S>, q: &WeightedPoint<S>) -> S {
    let dx = p.x.sub(&q.x).abs();
    let dy = p.y.sub(&q.y).abs();
    let gap = dx.max_of(&dy);
    gap.add(&gap).div(&p.w.add(&q.w))
}

/// Direct overlap test of the two closed squares at time `t`.
pub fn squares_intersect<S: Scalar>(p: &WeightedPoint<S>, q: &WeightedPoint<S>, t: &S) -> bool {
    let reach = t.mul(&p.w.add(&q.w)).half();
    let dx = p.x.sub(&q.x).abs();
    let dy = p.y.sub(&q.y).abs();
    dx.cmp_exact(&reach) != Ordering::Greater && dy.cmp_exact(&reach) != Ordering::Greater
}

/// Weighted centre of mass of two glyphs; the result carries `id`.
pub fn merge<S: Scalar>(p: &WeightedPoint<S>, q: &WeightedPoint<S>, id: PointId) -> WeightedPoint<S> {
    let w = p.w.add(&q.w);
    let x = p.w.mul(&p.x).add(&q.w.mul(&q.x)).div(&w);
    let y = p.w.mul(&p.y).add(&q.w.mul(&q.y)).div(&w);
    WeightedPoint { id, x, y, w }
}
