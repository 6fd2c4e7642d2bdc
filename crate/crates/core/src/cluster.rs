//! Agglomerative clustering by growing squares, and a quadratic reference.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use crate::engine::{Engine, EngineConfig, EngineError, EngineStats, QUERY_ID};
use crate::geometry::{merge, pairwise_intersection_time, squares_intersect, PointId, WeightedPoint};
use crate::kinetic::Time;
use crate::scalar::Scalar;

/// Two clusters joined at time `t` into `result`, centered at `(x, y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MergeEvent<S> {
    pub t: S,
    pub left: PointId,
    pub right: PointId,
    pub result: PointId,
    pub x: S,
    pub y: S,
    pub w: S,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dendrogram<S> {
    pub leaves: Vec<WeightedPoint<S>>,
    /// In the order they happen.
    pub merges: Vec<MergeEvent<S>>,
    /// Clusters alive at the end, by id.
    pub roots: Vec<PointId>,
}

impl<S: Scalar> Dendrogram<S> {
    /// Index of the first merge where `self` and `other` disagree, or the
    /// merge count if one is a prefix of the other.
    pub fn first_divergence(&self, other: &Self) -> Option<usize> {
        if self == other {
            return None;
        }
        let k = self
            .merges
            .iter()
            .zip(&other.merges)
            .position(|(a, b)| a != b)
            .unwrap_or(self.merges.len().min(other.merges.len()));
        Some(k)
    }

    /// Checks the forest shape, weight conservation and time order.
    pub fn validate(&self) -> Result<(), String> {
        let mut alive: BTreeMap<u64, S> = self.leaves.iter().map(|p| (p.id.0, p.w.clone())).collect();
        if alive.len() != self.leaves.len() {
            return Err("duplicate leaf id".into());
        }
        let mut last: Option<&S> = None;
        for m in &self.merges {
            if last.is_some_and(|l| m.t.cmp_exact(l) == Ordering::Less) {
                return Err(format!("merge {} goes back in time", m.result));
            }
            last = Some(&m.t);
            let wl = alive.remove(&m.left.0).ok_or(format!("{} merged twice or unknown", m.left))?;
            let wr = alive.remove(&m.right.0).ok_or(format!("{} merged twice or unknown", m.right))?;
            if wl.add(&wr).cmp_exact(&m.w) != Ordering::Equal {
                return Err(format!("weight of {} is not the sum of its parts", m.result));
            }
            if alive.insert(m.result.0, m.w.clone()).is_some() {
                return Err(format!("id {} reused", m.result));
            }
        }
        let roots: Vec<PointId> = alive.keys().map(|&k| PointId(k)).collect();
        if roots != self.roots {
            return Err("roots are not the clusters left unmerged".into());
        }
        Ok(())
    }
}

fn fresh_base<S>(points: &[WeightedPoint<S>]) -> u64 {
    points.iter().map(|p| p.id.0 + 1).max().unwrap_or(0)
}

/// Merged clusters take ids `max + 1, max + 2, ..`; all must stay below the query id.
fn check_id_room<S>(points: &[WeightedPoint<S>]) -> Result<(), EngineError> {
    if let Some(p) = points.iter().max_by_key(|p| p.id.0) {
        if p.id.0.checked_add(points.len() as u64).is_none_or(|top| top >= QUERY_ID) {
            return Err(EngineError::IdOutOfRange(p.id));
        }
    }
    Ok(())
}

fn record<S: Scalar>(merges: &mut Vec<MergeEvent<S>>, t: &S, left: PointId, right: PointId, z: &WeightedPoint<S>) {
    merges.push(MergeEvent {
        t: t.clone(),
        left,
        right,
        result: z.id,
        x: z.x.clone(),
        y: z.y.clone(),
        w: z.w.clone(),
    });
}

/// Clusters `points` with the kinetic engine. Merges happen while the clock
/// is at most `horizon`; new clusters take ids above every input id.
pub fn cluster<S: Scalar>(
    points: &[WeightedPoint<S>],
    horizon: Option<S>,
    cfg: EngineConfig,
) -> Result<(Dendrogram<S>, EngineStats), EngineError> {
    check_id_room(points)?;
    let mut engine = Engine::with_points(points, cfg)?;
    engine.set_horizon(horizon.map_or(Time::Infinite, Time::Finite));
    let mut next_id = fresh_base(points);
    let mut merges = Vec::new();
    while engine.len() > 1 {
        let Some((t, a, b)) = engine.advance_to_next_event() else {
            break;
        };
        let pa = engine.delete(a)?;
        let pb = engine.delete(b)?;
        let mut z = merge(&pa, &pb, PointId(next_id));
        next_id += 1;
        record(&mut merges, &t, a, b, &z);
        while let Some(r) = engine.intersects_query(&z) {
            let pr = engine.delete(r)?;
            let z2 = merge(&z, &pr, PointId(next_id));
            next_id += 1;
            record(&mut merges, &t, z.id, r, &z2);
            z = z2;
        }
        engine.insert_disjoint(z)?;
    }
    let mut roots: Vec<PointId> = engine.points().map(|p| p.id).collect();
    roots.sort_unstable();
    let stats = engine.stats().clone();
    Ok((
        Dendrogram {
            leaves: points.to_vec(),
            merges,
            roots,
        },
        stats,
    ))
}

struct Key<S>(S, u64, u64);

impl<S: Scalar> PartialEq for Key<S> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<S: Scalar> Eq for Key<S> {}
impl<S: Scalar> PartialOrd for Key<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<S: Scalar> Ord for Key<S> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .cmp_exact(&other.0)
            .then(self.1.cmp(&other.1))
            .then(self.2.cmp(&other.2))
    }
}

fn pair_key<S: Scalar>(p: &WeightedPoint<S>, q: &WeightedPoint<S>) -> Reverse<Key<S>> {
    let (a, b) = (p.id.0.min(q.id.0), p.id.0.max(q.id.0));
    Reverse(Key(pairwise_intersection_time(p, q), a, b))
}

/// Reference clustering: all pairwise contact times in a heap, with the same
/// merge, cascade and tie rules as [`cluster`].
pub fn brute_cluster<S: Scalar>(points: &[WeightedPoint<S>], horizon: Option<S>) -> Result<Dendrogram<S>, EngineError> {
    check_id_room(points)?;
    let mut alive: BTreeMap<u64, WeightedPoint<S>> = BTreeMap::new();
    for p in points {
        if p.w.signum() != Ordering::Greater {
            return Err(EngineError::NonPositiveWeight(p.id));
        }
        if alive.insert(p.id.0, p.clone()).is_some() {
            return Err(EngineError::DuplicateId(p.id));
        }
    }
    let mut heap = BinaryHeap::new();
    let live: Vec<&WeightedPoint<S>> = alive.values().collect();
    for (i, p) in live.iter().enumerate() {
        for q in &live[i + 1..] {
            heap.push(pair_key(p, q));
        }
    }
    let mut next_id = fresh_base(points);
    let mut merges = Vec::new();
    while let Some(Reverse(Key(t, a, b))) = heap.pop() {
        if horizon.as_ref().is_some_and(|h| t.cmp_exact(h) == Ordering::Greater) {
            break;
        }
        if !alive.contains_key(&a) || !alive.contains_key(&b) {
            continue;
        }
        let pa = alive.remove(&a).unwrap();
        let pb = alive.remove(&b).unwrap();
        let mut z = merge(&pa, &pb, PointId(next_id));
        next_id += 1;
        record(&mut merges, &t, pa.id, pb.id, &z);
        while let Some(r) = alive.values().find(|r| squares_intersect(r, &z, &t)).map(|r| r.id) {
            let pr = alive.remove(&r.0).unwrap();
            let z2 = merge(&z, &pr, PointId(next_id));
            next_id += 1;
            record(&mut merges, &t, z.id, r, &z2);
            z = z2;
        }
        for r in alive.values() {
            heap.push(pair_key(r, &z));
        }
        alive.insert(z.id.0, z);
    }
    Ok(Dendrogram {
        leaves: points.to_vec(),
        merges,
        roots: alive.keys().map(|&k| PointId(k)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::FrameSet;
    use crate::scalar::Rational;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type R = Rational;

    fn wp(id: u64, x: i64, y: i64, w: i64) -> WeightedPoint<R> {
        WeightedPoint::new(id, R::from_int(x), R::from_int(y), R::from_int(w))
    }

    fn both(pts: &[WeightedPoint<R>], horizon: Option<R>) -> Dendrogram<R> {
        let want = brute_cluster(pts, horizon.clone()).unwrap();
        for frames in [FrameSet::Eight, FrameSet::Four] {
            let cfg = EngineConfig { frames, ..Default::default() };
            let (got, _) = cluster(pts, horizon.clone(), cfg).unwrap();
            assert_eq!(got.first_divergence(&want), None, "{frames:?}\n got {:?}\nwant {:?}", got.merges, want.merges);
        }
        want.validate().unwrap();
        want
    }

    #[test]
    fn single_point_is_a_lone_leaf() {
        let d = both(&[wp(7, 1, 1, 1)], None);
        assert!(d.merges.is_empty());
        assert_eq!(d.roots, vec![PointId(7)]);
    }

    #[test]
    fn collinear_triple() {
        let d = both(&[wp(1, 0, 0, 1), wp(2, 3, 0, 1), wp(3, 10, 0, 1)], None);
        assert_eq!(d.merges.len(), 2);
        let m = &d.merges[0];
        assert_eq!((m.t.clone(), m.left, m.right), (R::from_int(3), PointId(1), PointId(2)));
        assert_eq!((m.x.clone(), m.w.clone()), (R::from_frac(3, 2), R::from_int(2)));
        // merged center 1.5 with weight 2 against 10 with weight 1: 2 * 8.5 / 3
        assert_eq!(d.merges[1].t, R::from_frac(17, 3));
        assert_eq!(d.roots, vec![PointId(5)]);
    }

    #[test]
    fn merged_square_swallows_a_tight_neighbour() {
        // 1 and 2 touch at t = 4; their union (center (2, 0), half-width 4)
        // reaches y = 4 while 3 (center (5, 5), half-width 2) already spans y >= 3
        let d = both(&[wp(1, 0, 0, 1), wp(2, 4, 0, 1), wp(3, 5, 5, 1)], None);
        assert_eq!(d.merges.len(), 2);
        assert_eq!(d.merges[0].t, R::from_int(4));
        assert_eq!(d.merges[1].t, R::from_int(4), "cascade merges at the same instant");
        assert_eq!((d.merges[1].left, d.merges[1].right), (PointId(4), PointId(3)));
    }

    #[test]
    fn horizon_leaves_a_forest() {
        let pts = [wp(1, 0, 0, 1), wp(2, 3, 0, 1), wp(3, 10, 0, 1)];
        let d = both(&pts, Some(R::from_int(4)));
        assert_eq!(d.merges.len(), 1);
        assert_eq!(d.roots, vec![PointId(3), PointId(4)]);
    }

    #[test]
    fn random_instances_match_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for round in 0..40 {
            let n = rng.random_range(2..=40);
            let span = if round % 2 == 0 { 16 } else { 1_000_000 };
            let pts: Vec<_> = (0..n)
                .map(|i| wp(i as u64, rng.random_range(0..=span), rng.random_range(0..=span), rng.random_range(1..=10_000)))
                .collect();
            let d = both(&pts, None);
            assert_eq!(d.roots.len(), 1);
        }
    }
}
