use std::cmp::Ordering;

use growing_squares::cluster::{brute_cluster, cluster};
use growing_squares::engine::{Engine, EngineConfig, EngineError, FrameSet};
use growing_squares::geometry::{PointId, WeightedPoint};
use growing_squares::scalar::{Rational, Scalar};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type R = Rational;

fn point(id: u64, x: i64, y: i64, w: i64) -> WeightedPoint<R> {
    WeightedPoint::new(id, R::from_int(x), R::from_int(y), R::from_int(w))
}

// Inserts after the clock has moved, with rotations handing associated
// structures between nodes.
fn fuzz(seed: u64, ops: usize, frames: FrameSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = EngineConfig { frames, ..Default::default() };
    let mut e: Engine<R> = Engine::new(cfg.clone());
    let mut next = 0u64;
    for op in 0..ops {
        let roll = rng.random_range(0..10);
        if e.len() < 2 || (roll < 6 && e.len() < 48) {
            for _ in 0..1000 {
                let p = point(next, rng.random_range(0..=20_000), rng.random_range(0..=20_000), rng.random_range(1..=100));
                match e.insert(p) {
                    Ok(()) => break,
                    Err(EngineError::Overlap { .. }) => continue,
                    Err(err) => panic!("op {op}: {err}"),
                }
            }
            next += 1;
        } else if roll < 9 {
            let ids: Vec<PointId> = e.points().map(|p| p.id).collect();
            let id = ids[rng.random_range(0..ids.len())];
            e.delete(id).unwrap();
        } else if let Some((_, a, b)) = e.advance_to_next_event() {
            e.delete(a).unwrap();
            e.delete(b).unwrap();
        }
        if let Err(err) = e.verify() {
            panic!("seed {seed} op {op}: {err}");
        }
        let pts: Vec<_> = e.points().cloned().collect();
        let mut fresh = Engine::with_points(&pts, cfg.clone()).unwrap();
        let a = e.clone().advance_to_next_event();
        let b = fresh.advance_to_next_event();
        match (a, b) {
            (None, None) => {}
            (Some(x), Some(y)) => {
                assert_eq!(x.0.cmp_exact(&y.0), Ordering::Equal, "seed {seed} op {op}");
                assert_eq!((x.1, x.2), (y.1, y.2), "seed {seed} op {op}");
            }
            (x, y) => panic!("seed {seed} op {op}: {x:?} vs {y:?}"),
        }
    }
}

#[test]
fn updates_after_time_moves() {
    for seed in 0..3 {
        fuzz(seed, 150, FrameSet::Eight);
    }
    fuzz(7, 150, FrameSet::Four);
}

#[test]
fn deleting_everything_leaves_an_empty_engine() {
    let pts: Vec<_> = (0..20).map(|i| point(i, i as i64 * 10, (i as i64 * 7) % 13, 1)).collect();
    let mut e = Engine::with_points(&pts, EngineConfig::default()).unwrap();
    for p in &pts {
        e.delete(p.id).unwrap();
        e.verify().unwrap();
    }
    assert!(e.is_empty());
    assert!(e.advance_to_next_event().is_none());
    assert_eq!(e.live_links(), 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn engine_matches_reference(raw in prop::collection::vec((0i64..400, 0i64..400, 1i64..20), 1..40)) {
        let pts: Vec<_> = raw.iter().enumerate().map(|(i, &(x, y, w))| point(i as u64, x, y, w)).collect();
        match cluster(&pts, None, EngineConfig::default()) {
            Ok((d, _)) => prop_assert!(d == brute_cluster(&pts, None).unwrap()),
            // coinciding centres overlap at time zero
            Err(EngineError::Overlap { .. }) => {}
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }
}
