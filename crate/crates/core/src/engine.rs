//! The full kinetic structure: several frame instances sharing one clock.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::QuadrantTransform;
use crate::geometry::{PointId, WeightedPoint};
use crate::kinetic::Time;
use crate::linked::Instance;
use crate::scalar::Scalar;

/// Id used for query squares, so a query never coincides with a stored key.
pub const QUERY_ID: u64 = i64::MAX as u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameSet {
    /// Every signed axis permutation.
    Eight,
    /// Identity and x-reflection, with and without the axis swap.
    Four,
}

impl FrameSet {
    pub fn frames(self) -> Vec<QuadrantTransform> {
        match self {
            FrameSet::Eight => QuadrantTransform::all8(),
            FrameSet::Four => QuadrantTransform::all4(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub alpha: f64,
    /// Float-mode tolerance; ignored in exact mode.
    pub epsilon: f64,
    pub frames: FrameSet,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            alpha: 0.25,
            epsilon: 1e-9,
            frames: FrameSet::Eight,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("point {0} already present")]
    DuplicateId(PointId),
    #[error("point {0} not present")]
    UnknownId(PointId),
    #[error("point {0} has non-positive weight")]
    NonPositiveWeight(PointId),
    #[error("point id {0} is reserved or too large")]
    IdOutOfRange(PointId),
    #[error("square of {inserted} overlaps square of {existing}")]
    Overlap { inserted: PointId, existing: PointId },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineStats {
    pub tournament_events: u64,
    pub link_events: u64,
    pub peak_certificates: usize,
    pub inserts: u64,
    pub deletes: u64,
    /// Largest number of links at one tournament node right after the bulk build.
    pub max_links_per_node: usize,
}

#[derive(Clone)]
pub struct Engine<S: Scalar> {
    cfg: EngineConfig,
    inst: Vec<Instance<S>>,
    now: S,
    horizon: Time<S>,
    slot_of: HashMap<u64, u32>,
    points: Vec<Option<WeightedPoint<S>>>,
    stats: EngineStats,
}

impl<S: Scalar> Engine<S> {
    pub fn new(cfg: EngineConfig) -> Self {
        let eps = if S::EXACT { 0.0 } else { cfg.epsilon };
        let inst = cfg
            .frames
            .frames()
            .into_iter()
            .map(|f| Instance::new(f, cfg.alpha, eps))
            .collect();
        Engine {
            cfg,
            inst,
            now: S::from_int(0),
            horizon: Time::Infinite,
            slot_of: HashMap::new(),
            points: Vec::new(),
            stats: EngineStats::default(),
        }
    }

    /// Builds the engine over `points` at time 0.
    pub fn with_points(points: &[WeightedPoint<S>], cfg: EngineConfig) -> Result<Self, EngineError> {
        let mut e = Engine::new(cfg);
        for p in points {
            e.admit(p)?;
        }
        let refs: Vec<(u32, &WeightedPoint<S>)> = e
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (i as u32, p.as_ref().unwrap()))
            .collect();
        let now = e.now.clone();
        for inst in &mut e.inst {
            inst.build(&refs, &now);
        }
        e.note_certificates();
        e.stats.max_links_per_node = e.max_links_per_node();
        Ok(e)
    }

    fn admit(&mut self, p: &WeightedPoint<S>) -> Result<u32, EngineError> {
        if p.id.0 >= QUERY_ID {
            return Err(EngineError::IdOutOfRange(p.id));
        }
        if p.w.signum() != Ordering::Greater {
            return Err(EngineError::NonPositiveWeight(p.id));
        }
        if self.slot_of.contains_key(&p.id.0) {
            return Err(EngineError::DuplicateId(p.id));
        }
        let slot = self.points.len() as u32;
        self.points.push(Some(p.clone()));
        self.slot_of.insert(p.id.0, slot);
        Ok(slot)
    }

    fn note_certificates(&mut self) {
        let c: usize = self.inst.iter().map(|i| i.tour.queue.len() + i.lqueue.len()).sum();
        self.stats.peak_certificates = self.stats.peak_certificates.max(c);
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn now(&self) -> &S {
        &self.now
    }

    pub fn set_horizon(&mut self, horizon: Time<S>) {
        self.horizon = horizon;
    }

    pub fn len(&self) -> usize {
        self.slot_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slot_of.is_empty()
    }

    pub fn stats(&self) -> &EngineStats {
        &self.stats
    }

    pub fn instances(&self) -> &[Instance<S>] {
        &self.inst
    }

    pub fn get(&self, id: PointId) -> Option<&WeightedPoint<S>> {
        self.slot_of.get(&id.0).and_then(|&s| self.points[s as usize].as_ref())
    }

    /// Live points in slot order.
    pub fn points(&self) -> impl Iterator<Item = &WeightedPoint<S>> {
        self.points.iter().flatten()
    }

    /// Adds `p` at the current time. Away from time 0 the square of `p` must
    /// not meet any stored square.
    pub fn insert(&mut self, p: WeightedPoint<S>) -> Result<(), EngineError> {
        if p.w.signum() != Ordering::Greater {
            return Err(EngineError::NonPositiveWeight(p.id));
        }
        if self.slot_of.contains_key(&p.id.0) {
            return Err(EngineError::DuplicateId(p.id));
        }
        if self.now.signum() == Ordering::Greater {
            if let Some(existing) = self.intersects_query(&p) {
                return Err(EngineError::Overlap {
                    inserted: p.id,
                    existing,
                });
            }
        }
        self.insert_disjoint(p)
    }

    /// Adds `p` without the overlap check.
    pub(crate) fn insert_disjoint(&mut self, p: WeightedPoint<S>) -> Result<(), EngineError> {
        let slot = self.admit(&p)?;
        let now = self.now.clone();
        for inst in &mut self.inst {
            inst.insert(slot, &p, &now);
        }
        self.stats.inserts += 1;
        self.note_certificates();
        Ok(())
    }

    pub fn delete(&mut self, id: PointId) -> Result<WeightedPoint<S>, EngineError> {
        let slot = self.slot_of.remove(&id.0).ok_or(EngineError::UnknownId(id))?;
        let now = self.now.clone();
        for inst in &mut self.inst {
            inst.delete(slot, &now);
        }
        self.stats.deletes += 1;
        Ok(self.points[slot as usize].take().unwrap())
    }

    /// Runs internal events up to the next pair of touching squares and
    /// returns it as `(t, smaller id, larger id)`; `now` becomes `t`. Returns
    /// `None` when no contact happens up to the horizon. The reported pair
    /// stays current until one of its points is deleted.
    pub fn advance_to_next_event(&mut self) -> Option<(S, PointId, PointId)> {
        loop {
            let mut lt: Time<S> = Time::Infinite;
            for inst in &self.inst {
                if let Some(t) = inst.next_link_time() {
                    if t.cmp_time(&lt) == Ordering::Less {
                        lt = t.clone();
                    }
                }
            }
            let mut tt: Option<(usize, Time<S>)> = None;
            for (i, inst) in self.inst.iter().enumerate() {
                if let Some(t) = inst.next_tournament_time() {
                    if tt.as_ref().is_none_or(|(_, b)| t.cmp_time(b) == Ordering::Less) {
                        tt = Some((i, t.clone()));
                    }
                }
            }
            if let Some((i, t)) = tt {
                if t.cmp_time(&lt) != Ordering::Greater && t.cmp_time(&self.horizon) != Ordering::Greater {
                    let t = t.finite().expect("infinite certificates are never queued").clone();
                    if t.cmp_exact(&self.now) == Ordering::Greater {
                        self.now = t;
                    }
                    let now = self.now.clone();
                    self.inst[i].process_tournament_event(&now);
                    self.stats.tournament_events += 1;
                    continue;
                }
            }
            if lt.cmp_time(&self.horizon) == Ordering::Greater {
                return None;
            }
            let t = lt.finite()?.clone();
            let mut best: Option<(u64, u64)> = None;
            for inst in &self.inst {
                if inst.next_link_time().is_some_and(|x| x.cmp_time(&lt) == Ordering::Equal) {
                    if let Some(pair) = inst.best_pair_at(&t) {
                        if best.is_none_or(|b| pair < b) {
                            best = Some(pair);
                        }
                    }
                }
            }
            let (a, b) = best?;
            if t.cmp_exact(&self.now) == Ordering::Greater {
                self.now = t;
            }
            self.stats.link_events += 1;
            self.note_certificates();
            return Some((self.now.clone(), PointId(a), PointId(b)));
        }
    }

    /// Every stored point whose square meets the square of `q` at `now`.
    pub fn witnesses(&self, q: &WeightedPoint<S>) -> Vec<PointId> {
        let mut probe = q.clone();
        probe.id = PointId(QUERY_ID);
        let mut out = Vec::new();
        for inst in &self.inst {
            inst.witnesses(&probe, &self.now, &mut out);
        }
        out.sort_unstable();
        out.dedup();
        out.into_iter().map(PointId).collect()
    }

    /// Smallest id among stored squares meeting the square of `q` at `now`.
    pub fn intersects_query(&self, q: &WeightedPoint<S>) -> Option<PointId> {
        self.witnesses(q).into_iter().next()
    }

    /// Smallest id among stored squares containing `(x, y)` at `now`.
    pub fn contains_query(&self, x: S, y: S) -> Option<PointId> {
        let probe = WeightedPoint::new(QUERY_ID, x, y, S::from_int(0));
        self.intersects_query(&probe)
    }

    /// Checks every instance against its own invariants and against links
    /// recomputed from scratch on the current trees.
    pub fn verify(&self) -> Result<(), String> {
        for inst in &self.inst {
            if inst.len() != self.len() {
                return Err(format!("frame {:?} holds {} points, engine {}", inst.frame, inst.len(), self.len()));
            }
            inst.check(&self.now).map_err(|e| format!("frame {:?}: {e}", inst.frame))?;
            let live: std::collections::BTreeSet<(u32, u32)> = inst.link_pairs().into_iter().collect();
            if live != inst.links_from_scratch(&self.now) {
                return Err(format!("frame {:?}: link set differs from a fresh computation", inst.frame));
            }
        }
        Ok(())
    }

    pub fn max_links_per_node(&self) -> usize {
        self.inst.iter().map(|i| i.max_links_per_node()).max().unwrap_or(0)
    }

    pub fn live_links(&self) -> usize {
        self.inst.iter().map(|i| i.live_links()).sum()
    }
}
