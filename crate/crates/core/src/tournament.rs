//! Kinetic tournaments over γ-ordered leaves.
//!
//! Each tournament node tracks two winners over its leaf set: the minimum
//! frame-x of the lower-left corners and the maximum frame-x of the upper-right
//! corners. Ties at the current time are broken by slope (so the winner stays
//! valid for a short while after `now`) and then by the perturbed key.

use std::cmp::Ordering;

use crate::frame::FramePoints;
use crate::kinetic::{failure_time, EventQueue, Handle, KineticError, LinearMotion, Time};
use crate::scalar::Scalar;
use crate::wbtree::{Forest, TreeError, UpdateReport, NIL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    /// Lower-left corners, minimum frame-x.
    Min = 0,
    /// Upper-right corners, maximum frame-x.
    Max = 1,
}

pub const ROLES: [Role; 2] = [Role::Min, Role::Max];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TourEvent {
    pub node: u32,
    pub role: Role,
}

#[derive(Clone)]
pub struct Tournaments<S: Scalar> {
    pub forest: Forest,
    win: Vec<[u32; 2]>,
    /// Loser of the last comparison; the certificate depends only on the pair.
    lose: Vec<[u32; 2]>,
    cert: Vec<[Option<Handle>; 2]>,
    pub queue: EventQueue<S, TourEvent>,
    eps: f64,
    pub events: u64,
}

#[inline]
pub fn motion<S: Scalar>(pts: &FramePoints<S>, item: u32, role: Role) -> (&S, &S) {
    match role {
        Role::Min => pts.lower(item),
        Role::Max => pts.upper(item),
    }
}

/// Does `a` beat `b` in `role` at time `now`?
#[inline]
pub fn beats<S: Scalar>(pts: &FramePoints<S>, a: u32, b: u32, role: Role, now: &S, eps: f64) -> bool {
    let (a1, b1) = motion(pts, a, role);
    let (a2, b2) = motion(pts, b, role);
    let ord = S::lin_cmp(a1, b1, a2, b2, now, eps)
        .then_with(|| b1.cmp_exact(b2))
        .then_with(|| pts.cmp_x(a, b));
    match role {
        Role::Min => ord == Ordering::Less,
        Role::Max => ord == Ordering::Greater,
    }
}

fn to_motion<S: Scalar>(m: (&S, &S)) -> LinearMotion<S> {
    LinearMotion::new(m.0.clone(), m.1.clone())
}

impl<S: Scalar> Tournaments<S> {
    pub fn new(alpha: f64, eps: f64) -> Self {
        Tournaments {
            forest: Forest::new(alpha),
            win: Vec::new(),
            lose: Vec::new(),
            cert: Vec::new(),
            queue: EventQueue::new(),
            eps,
            events: 0,
        }
    }

    fn grow(&mut self) {
        let n = self.forest.capacity();
        if self.win.len() < n {
            self.win.resize(n, [NIL, NIL]);
            self.lose.resize(n, [NIL, NIL]);
            self.cert.resize(n, [None, None]);
        }
    }

    #[inline]
    pub fn winner(&self, node: u32, role: Role) -> u32 {
        self.win[node as usize][role as usize]
    }

    pub fn winner_motion(&self, node: u32, role: Role, pts: &FramePoints<S>) -> Result<LinearMotion<S>, KineticError> {
        if node == NIL {
            return Err(KineticError::EmptyTournament);
        }
        Ok(to_motion(motion(pts, self.winner(node, role), role)))
    }

    pub fn cert_handle(&self, node: u32, role: Role) -> Option<Handle> {
        self.cert[node as usize][role as usize]
    }

    fn drop_cert(&mut self, node: u32, role: Role) {
        if let Some(h) = self.cert[node as usize][role as usize].take() {
            self.queue.cancel(h).expect("tournament certificate handle must be live");
        }
    }

    /// Recomputes the winners of `x` from its children and reschedules its
    /// certificates. Returns which roles changed winner.
    fn recompute(&mut self, x: u32, pts: &FramePoints<S>, now: &S) -> [bool; 2] {
        let n = *self.forest.node(x);
        let mut changed = [false; 2];
        if n.left == NIL {
            for role in ROLES {
                let r = role as usize;
                changed[r] = self.win[x as usize][r] != n.min;
                self.win[x as usize][r] = n.min;
                self.lose[x as usize][r] = NIL;
                self.drop_cert(x, role);
            }
            return changed;
        }
        for role in ROLES {
            let r = role as usize;
            let a = self.win[n.left as usize][r];
            let b = self.win[n.right as usize][r];
            let (w, l) = if beats(pts, a, b, role, now, self.eps) { (a, b) } else { (b, a) };
            changed[r] = self.win[x as usize][r] != w;
            if !changed[r] && self.lose[x as usize][r] == l {
                continue;
            }
            self.win[x as usize][r] = w;
            self.schedule(x, role, l, pts, now);
        }
        changed
    }

    /// Builds a tournament over `items`, already sorted by γ-key.
    pub fn build(&mut self, items: &[u32], pts: &FramePoints<S>, now: &S) -> (u32, Vec<u32>) {
        let (root, created) = self.forest.from_sorted(items);
        self.grow();
        for &x in &created {
            self.win[x as usize] = [NIL, NIL];
            self.lose[x as usize] = [NIL, NIL];
            self.cert[x as usize] = [None, None];
        }
        for &x in &created {
            self.recompute(x, pts, now);
        }
        (root, created)
    }

    fn settle(&mut self, rep: &UpdateReport, pts: &FramePoints<S>, now: &S) -> Vec<(u32, [bool; 2])> {
        self.grow();
        for &x in &rep.created {
            self.win[x as usize] = [NIL, NIL];
            self.lose[x as usize] = [NIL, NIL];
            self.cert[x as usize] = [None, None];
        }
        let mut order: Vec<(usize, u32)> = rep
            .touched
            .iter()
            .map(|&x| (self.forest.depth(x), x))
            .collect();
        order.sort_unstable_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut changed = Vec::with_capacity(order.len());
        for (_, x) in order {
            let c = self.recompute(x, pts, now);
            if c[0] || c[1] {
                changed.push((x, c));
            }
        }
        changed
    }

    /// Inserts a leaf; returns the tree report and nodes whose winners changed.
    pub fn insert(
        &mut self,
        root: u32,
        item: u32,
        pts: &FramePoints<S>,
        now: &S,
    ) -> Result<(UpdateReport, Vec<(u32, [bool; 2])>), TreeError> {
        let rep = self.forest.insert(root, item, |a, b| pts.cmp_g(a, b))?;
        let changed = self.settle(&rep, pts, now);
        Ok((rep, changed))
    }

    pub fn delete(
        &mut self,
        root: u32,
        item: u32,
        pts: &FramePoints<S>,
        now: &S,
    ) -> Result<(UpdateReport, Vec<(u32, [bool; 2])>), TreeError> {
        let rep = self.forest.delete(root, item, |a, b| pts.cmp_g(a, b))?;
        for &x in &rep.removed {
            for role in ROLES {
                self.drop_cert(x, role);
            }
        }
        let changed = self.settle(&rep, pts, now);
        Ok((rep, changed))
    }

    /// Frees a whole tournament; freed node ids are appended to `freed`.
    pub fn free(&mut self, root: u32, freed: &mut Vec<u32>) {
        let start = freed.len();
        self.forest.free_tree(root, freed);
        for i in start..freed.len() {
            let x = freed[i];
            for role in ROLES {
                self.drop_cert(x, role);
            }
        }
    }

    /// Repairs the tournament after the certificate of (`node`, `role`) failed
    /// at `now`. Returns the nodes whose winner in `role` changed.
    pub fn handle_failure(&mut self, node: u32, role: Role, pts: &FramePoints<S>, now: &S) -> Vec<u32> {
        self.events += 1;
        self.cert[node as usize][role as usize] = None;
        let mut out = Vec::new();
        let mut x = node;
        while x != NIL {
            let before = self.win[x as usize][role as usize];
            self.recompute_role(x, role, pts, now);
            if self.win[x as usize][role as usize] == before && x != node {
                break;
            }
            if self.win[x as usize][role as usize] != before {
                out.push(x);
            }
            x = self.forest.node(x).parent;
        }
        out
    }

    fn recompute_role(&mut self, x: u32, role: Role, pts: &FramePoints<S>, now: &S) {
        let n = *self.forest.node(x);
        let r = role as usize;
        debug_assert!(n.left != NIL);
        let a = self.win[n.left as usize][r];
        let b = self.win[n.right as usize][r];
        let (w, l) = if beats(pts, a, b, role, now, self.eps) { (a, b) } else { (b, a) };
        self.win[x as usize][r] = w;
        self.schedule(x, role, l, pts, now);
    }

    /// Replaces the certificate of (`x`, `role`) by one for its winner against `l`.
    fn schedule(&mut self, x: u32, role: Role, l: u32, pts: &FramePoints<S>, now: &S) {
        let r = role as usize;
        let w = self.win[x as usize][r];
        self.lose[x as usize][r] = l;
        self.drop_cert(x, role);
        let (lhs, rhs) = match role {
            Role::Min => (w, l),
            Role::Max => (l, w),
        };
        let t = failure_time(
            &to_motion(motion(pts, lhs, role)),
            &to_motion(motion(pts, rhs, role)),
            now,
            self.eps,
        )
        .unwrap_or_else(|_| Time::Finite(now.clone()));
        if !t.is_infinite() {
            let h = self.queue.schedule(t, TourEvent { node: x, role });
            self.cert[x as usize][r] = Some(h);
        }
    }

    /// Pops the earliest certificate if it fails no later than `bound`.
    pub fn pop_due(&mut self, bound: &Time<S>) -> Option<(Time<S>, TourEvent)> {
        let (t, _, ev) = self.queue.pop_due(bound)?;
        self.cert[ev.node as usize][ev.role as usize] = None;
        Some((t, ev))
    }

    /// Brute-force check of every winner in the tree at `now`.
    pub fn check(&self, root: u32, pts: &FramePoints<S>, now: &S) -> Result<(), String> {
        let mut nodes = Vec::new();
        self.forest.subtree_nodes(root, &mut nodes);
        for x in nodes {
            let leaves = self.forest.leaves(x);
            for role in ROLES {
                let best = leaves
                    .iter()
                    .copied()
                    .reduce(|a, b| if beats(pts, a, b, role, now, self.eps) { a } else { b })
                    .unwrap();
                if best != self.winner(x, role) {
                    return Err(format!("node {x} {role:?}: winner {} expected {best}", self.winner(x, role)));
                }
                if !self.forest.is_leaf(x) {
                    let live = self.cert[x as usize][role as usize];
                    if let Some(h) = live {
                        let (t, _) = self.queue.get(h).ok_or("dead certificate handle")?;
                        if let Time::Finite(t) = t {
                            if t.cmp_exact(now) == Ordering::Less {
                                return Err(format!("node {x}: certificate in the past"));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
