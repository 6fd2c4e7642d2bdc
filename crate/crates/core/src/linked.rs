//! One frame of the kinetic structure: a three-layer range tree
//! (frame-x, frame-y, γ) whose last layer is a kinetic tournament, plus the
//! linking certificates between its lower-left and upper-right views.
//!
//! Both views share one skeleton. Every tournament node carries the
//! lower-left winner (minimum frame-x, the `L` side) and the upper-right
//! winner (maximum frame-x, the `R` side). A node `w` acting as `L` and a node
//! `z` acting as `R` are linked exactly when each is canonical for the other's
//! query point:
//!
//! * `w ∈ QL(max-point of z)`: all of `P_w` lies in `{X ≥ ·, Y ≥ ·, γ > ·}`,
//! * `z ∈ QR(min-point of w)`: all of `P_z` lies in `{X ≤ ·, Y ≤ ·, γ < ·}`,
//!
//! where the query point takes its three coordinates from the primary,
//! secondary and tournament nodes on the path to the node. Whether a pair is
//! linked therefore depends only on the min/max summaries of the three nodes
//! and of their parents. Updates cache these summaries per node and relink
//! exactly the nodes whose summaries changed.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashSet};

use crate::frame::{FramePoints, PKey, QuadrantTransform};
use crate::geometry::WeightedPoint;
use crate::kinetic::{failure_time, EventQueue, Handle, LinearMotion, Time};
use crate::scalar::Scalar;
use crate::tournament::{motion, Role, TourEvent, Tournaments};
use crate::wbtree::{Forest, UpdateReport, NIL};

/// Position of a tournament node: primary node, secondary node, tournament node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeAddress {
    pub u: u32,
    pub v: u32,
    pub w: u32,
}

#[derive(Clone, Copy, Debug)]
struct Marked {
    addr: NodeAddress,
    ver: u32,
}

#[derive(Clone, Copy, Debug)]
struct Link {
    /// Lower-left side.
    w: u32,
    /// Upper-right side.
    z: u32,
    h: Option<Handle>,
    next: [u32; 2],
    prev: [u32; 2],
}

/// Query point with three perturbed coordinates.
#[derive(Clone, Debug)]
pub struct QueryPoint3<S> {
    pub x: PKey<S>,
    pub y: PKey<S>,
    pub g: PKey<S>,
}

#[derive(Clone)]
pub struct Instance<S: Scalar> {
    pub frame: QuadrantTransform,
    pub pts: FramePoints<S>,
    prim: Forest,
    proot: u32,
    sec: Forest,
    pub tour: Tournaments<S>,
    pctx: Vec<[u32; 4]>,
    sctx: Vec<[u32; 4]>,
    tctx: Vec<[u32; 4]>,
    links: Vec<Link>,
    free_links: Vec<u32>,
    live_links: usize,
    lhead: Vec<[u32; 2]>,
    pub lqueue: EventQueue<S, u32>,
    amark: Vec<u32>,
    /// Sides (`SIDE_L`, `SIDE_R`) to relink for nodes marked this epoch.
    amask: Vec<u8>,
    /// Position of a marked node in `affected`.
    aidx: Vec<u32>,
    epoch: u32,
    affected: Vec<Marked>,
    relink: Vec<(u32, u32, [bool; 2])>,
    all_affected: bool,
    eps: f64,
    len: usize,
    /// Tournament nodes whose links were rebuilt, summed over updates.
    pub relinked_nodes: u64,
    pub links_created: u64,
}

const SIDE_L: u8 = 1;
const SIDE_R: u8 = 2;
const BOTH: u8 = SIDE_L | SIDE_R;

/// Sides whose links depend on the summary entries that differ. Lower-left
/// membership reads `min` and the parent's `min`; upper-right reads `max`s.
fn ctx_sides(old: &[u32; 4], new: &[u32; 4]) -> u8 {
    let mut m = 0;
    if old[0] != new[0] || old[2] != new[2] {
        m |= SIDE_L;
    }
    if old[1] != new[1] || old[3] != new[3] {
        m |= SIDE_R;
    }
    m
}

fn ctx_of(f: &Forest, x: u32) -> [u32; 4] {
    let n = f.node(x);
    if n.parent == NIL {
        [n.min, n.max, NIL, NIL]
    } else {
        let p = f.node(n.parent);
        [n.min, n.max, p.min, p.max]
    }
}

fn merge_by(a: &[u32], b: &[u32], cmp: impl Fn(u32, u32) -> Ordering) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if cmp(a[i], b[j]) == Ordering::Less {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

impl<S: Scalar> Instance<S> {
    pub fn new(frame: QuadrantTransform, alpha: f64, eps: f64) -> Self {
        Instance {
            frame,
            pts: FramePoints::new(),
            prim: Forest::new(alpha),
            proot: NIL,
            sec: Forest::new(alpha),
            tour: Tournaments::new(alpha, eps),
            pctx: Vec::new(),
            sctx: Vec::new(),
            tctx: Vec::new(),
            links: Vec::new(),
            free_links: Vec::new(),
            live_links: 0,
            lhead: Vec::new(),
            lqueue: EventQueue::new(),
            amark: Vec::new(),
            amask: Vec::new(),
            aidx: Vec::new(),
            epoch: 0,
            affected: Vec::new(),
            relink: Vec::new(),
            all_affected: false,
            eps,
            len: 0,
            relinked_nodes: 0,
            links_created: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn live_links(&self) -> usize {
        self.live_links
    }

    pub fn tournament_nodes(&self) -> usize {
        self.tour.forest.live_nodes()
    }

    pub fn primary(&self) -> (&Forest, u32) {
        (&self.prim, self.proot)
    }

    pub fn secondary(&self) -> &Forest {
        &self.sec
    }

    fn grow(&mut self) {
        let np = self.prim.capacity();
        if self.pctx.len() < np {
            self.pctx.resize(np, [NIL; 4]);
        }
        let ns = self.sec.capacity();
        if self.sctx.len() < ns {
            self.sctx.resize(ns, [NIL; 4]);
        }
        let nt = self.tour.forest.capacity();
        if self.tctx.len() < nt {
            self.tctx.resize(nt, [NIL; 4]);
            self.lhead.resize(nt, [NIL; 2]);
            self.amark.resize(nt, 0);
            self.amask.resize(nt, 0);
            self.aidx.resize(nt, 0);
        }
    }

    fn begin_update(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.amark.iter_mut().for_each(|m| *m = 0);
            self.epoch = 1;
        }
        self.affected.clear();
        self.relink.clear();
        self.all_affected = false;
    }

    fn marked(&self, x: u32, side: u8) -> bool {
        self.amark[x as usize] == self.epoch && self.amask[x as usize] & side != 0
    }

    fn mark_affected(&mut self, u: u32, v: u32, w: u32, sides: u8) {
        if self.amark[w as usize] == self.epoch {
            self.amask[w as usize] |= sides;
            self.affected[self.aidx[w as usize] as usize].addr = NodeAddress { u, v, w };
        } else {
            self.amark[w as usize] = self.epoch;
            self.amask[w as usize] = sides;
            self.aidx[w as usize] = self.affected.len() as u32;
            let ver = self.tour.forest.node(w).ver;
            self.affected.push(Marked {
                addr: NodeAddress { u, v, w },
                ver,
            });
        }
    }

    fn mark_tournament(&mut self, u: u32, v: u32, sides: u8) {
        let mut nodes = Vec::new();
        self.tour.forest.subtree_nodes(self.sec.node(v).assoc, &mut nodes);
        for w in nodes {
            self.mark_affected(u, v, w, sides);
        }
    }

    fn mark_secondary(&mut self, u: u32, sides: u8) {
        let mut nodes = Vec::new();
        self.sec.subtree_nodes(self.prim.node(u).assoc, &mut nodes);
        for v in nodes {
            self.mark_tournament(u, v, sides);
        }
    }

    // ----- links -----

    fn link_time(&self, w: u32, z: u32, now: &S) -> Time<S> {
        let p = self.tour.winner(w, Role::Min);
        let q = self.tour.winner(z, Role::Max);
        let (qa, qb) = self.pts.upper(q);
        let (pa, pb) = self.pts.lower(p);
        let lhs = LinearMotion::new(qa.clone(), qb.clone());
        let rhs = LinearMotion::new(pa.clone(), pb.clone());
        failure_time(&lhs, &rhs, now, self.eps).unwrap_or_else(|_| Time::Finite(now.clone()))
    }

    fn add_link(&mut self, w: u32, z: u32, now: &S) {
        let id = match self.free_links.pop() {
            Some(i) => i,
            None => {
                self.links.push(Link {
                    w: NIL,
                    z: NIL,
                    h: None,
                    next: [NIL; 2],
                    prev: [NIL; 2],
                });
                (self.links.len() - 1) as u32
            }
        };
        let t = self.link_time(w, z, now);
        let h = self.lqueue.schedule(t, id);
        let (hw, hz) = (self.lhead[w as usize][0], self.lhead[z as usize][1]);
        self.links[id as usize] = Link {
            w,
            z,
            h: Some(h),
            next: [hw, hz],
            prev: [NIL, NIL],
        };
        if hw != NIL {
            self.links[hw as usize].prev[0] = id;
        }
        if hz != NIL {
            self.links[hz as usize].prev[1] = id;
        }
        self.lhead[w as usize][0] = id;
        self.lhead[z as usize][1] = id;
        self.live_links += 1;
        self.links_created += 1;
    }

    fn unthread(&mut self, id: u32, side: usize) {
        let l = self.links[id as usize];
        let owner = if side == 0 { l.w } else { l.z };
        if l.prev[side] == NIL {
            self.lhead[owner as usize][side] = l.next[side];
        } else {
            self.links[l.prev[side] as usize].next[side] = l.next[side];
        }
        if l.next[side] != NIL {
            self.links[l.next[side] as usize].prev[side] = l.prev[side];
        }
    }

    fn remove_link(&mut self, id: u32) {
        self.unthread(id, 0);
        self.unthread(id, 1);
        if let Some(h) = self.links[id as usize].h.take() {
            self.lqueue.cancel(h).expect("link certificate handle must be live");
        }
        self.links[id as usize].w = NIL;
        self.links[id as usize].z = NIL;
        self.free_links.push(id);
        self.live_links -= 1;
    }

    fn drop_side(&mut self, x: u32, side: usize) {
        while self.lhead[x as usize][side] != NIL {
            let id = self.lhead[x as usize][side];
            self.remove_link(id);
        }
    }

    /// Clears all state of a tournament node that is about to be freed.
    fn forget(&mut self, x: u32) {
        self.drop_side(x, 0);
        self.drop_side(x, 1);
        self.amark[x as usize] = 0;
    }

    fn relink_side(&mut self, x: u32, side: usize, now: &S) {
        let mut id = self.lhead[x as usize][side];
        while id != NIL {
            let l = self.links[id as usize];
            if let Some(h) = l.h {
                self.lqueue.cancel(h).expect("link certificate handle must be live");
            }
            let t = self.link_time(l.w, l.z, now);
            self.links[id as usize].h = Some(self.lqueue.schedule(t, id));
            id = l.next[side];
        }
    }

    /// Links of node `x` on one side: 0 as lower-left partner, 1 as upper-right.
    pub fn links_of(&self, x: u32, side: usize) -> Vec<u32> {
        let mut out = Vec::new();
        let mut id = self.lhead[x as usize][side];
        while id != NIL {
            let l = &self.links[id as usize];
            out.push(if side == 0 { l.z } else { l.w });
            id = l.next[side];
        }
        out
    }

    /// Every live link as (lower-left node, upper-right node).
    pub fn link_pairs(&self) -> Vec<(u32, u32)> {
        self.links.iter().filter(|l| l.w != NIL).map(|l| (l.w, l.z)).collect()
    }

    // ----- canonical queries -----

    /// Query point `(min x of P_u, min y of P_v, min γ of P_w)`.
    pub fn min_point(&self, a: NodeAddress) -> QueryPoint3<S> {
        QueryPoint3 {
            x: self.pts.kx[self.prim.node(a.u).min as usize].clone(),
            y: self.pts.ky[self.sec.node(a.v).min as usize].clone(),
            g: self.pts.kg[self.tour.forest.node(a.w).min as usize].clone(),
        }
    }

    /// Query point `(max x of P_u, max y of P_v, max γ of P_w)`.
    pub fn max_point(&self, a: NodeAddress) -> QueryPoint3<S> {
        QueryPoint3 {
            x: self.pts.kx[self.prim.node(a.u).max as usize].clone(),
            y: self.pts.ky[self.sec.node(a.v).max as usize].clone(),
            g: self.pts.kg[self.tour.forest.node(a.w).max as usize].clone(),
        }
    }

    /// Canonical tournament nodes for `{X ≥ q.x, Y ≥ q.y, γ > q.g}`.
    pub fn ql(&self, q: &QueryPoint3<S>) -> Vec<NodeAddress> {
        let pts = &self.pts;
        let mut out = Vec::new();
        let mut us = Vec::new();
        self.prim
            .canonical_suffix(self.proot, |i| pts.kx[i as usize].cmp(&q.x) != Ordering::Less, &mut us);
        for u in us {
            let mut vs = Vec::new();
            self.sec.canonical_suffix(
                self.prim.node(u).assoc,
                |i| pts.ky[i as usize].cmp(&q.y) != Ordering::Less,
                &mut vs,
            );
            for v in vs {
                let mut ws = Vec::new();
                self.tour.forest.canonical_suffix(
                    self.sec.node(v).assoc,
                    |i| pts.kg[i as usize].cmp(&q.g) == Ordering::Greater,
                    &mut ws,
                );
                out.extend(ws.into_iter().map(|w| NodeAddress { u, v, w }));
            }
        }
        out
    }

    /// Canonical tournament nodes for `{X ≤ q.x, Y ≤ q.y, γ < q.g}`.
    pub fn qr(&self, q: &QueryPoint3<S>) -> Vec<NodeAddress> {
        let pts = &self.pts;
        let mut out = Vec::new();
        let mut us = Vec::new();
        self.prim
            .canonical_prefix(self.proot, |i| pts.kx[i as usize].cmp(&q.x) != Ordering::Greater, &mut us);
        for u in us {
            let mut vs = Vec::new();
            self.sec.canonical_prefix(
                self.prim.node(u).assoc,
                |i| pts.ky[i as usize].cmp(&q.y) != Ordering::Greater,
                &mut vs,
            );
            for v in vs {
                let mut ws = Vec::new();
                self.tour.forest.canonical_prefix(
                    self.sec.node(v).assoc,
                    |i| pts.kg[i as usize].cmp(&q.g) == Ordering::Less,
                    &mut ws,
                );
                out.extend(ws.into_iter().map(|w| NodeAddress { u, v, w }));
            }
        }
        out
    }

    /// `a` belongs to `QL(q)`, decided from node and parent summaries only.
    pub fn in_ql(&self, a: NodeAddress, q: &QueryPoint3<S>) -> bool {
        let pts = &self.pts;
        self.prim
            .is_canonical_suffix(a.u, |i| pts.kx[i as usize].cmp(&q.x) != Ordering::Less)
            && self
                .sec
                .is_canonical_suffix(a.v, |i| pts.ky[i as usize].cmp(&q.y) != Ordering::Less)
            && self
                .tour
                .forest
                .is_canonical_suffix(a.w, |i| pts.kg[i as usize].cmp(&q.g) == Ordering::Greater)
    }

    pub fn in_qr(&self, a: NodeAddress, q: &QueryPoint3<S>) -> bool {
        let pts = &self.pts;
        self.prim
            .is_canonical_prefix(a.u, |i| pts.kx[i as usize].cmp(&q.x) != Ordering::Greater)
            && self
                .sec
                .is_canonical_prefix(a.v, |i| pts.ky[i as usize].cmp(&q.y) != Ordering::Greater)
            && self
                .tour
                .forest
                .is_canonical_prefix(a.w, |i| pts.kg[i as usize].cmp(&q.g) == Ordering::Less)
    }

    /// Secondary nodes `v2` (under primary `u2`) whose tournaments may hold
    /// upper-right partners of lower-left nodes at `(u, v)`: the pairs that
    /// pass the x and y halves of the link test.
    fn w_side_groups(&self, u: u32, v: u32, out: &mut Vec<u32>) {
        let pts = &self.pts;
        let (prim, sec) = (&self.prim, &self.sec);
        let qx = &pts.kx[prim.node(u).min as usize];
        let qy = &pts.ky[sec.node(v).min as usize];
        let (mut us, mut vs) = (Vec::new(), Vec::new());
        prim.canonical_prefix(self.proot, |i| pts.kx[i as usize].cmp(qx) != Ordering::Greater, &mut us);
        for &u2 in &us {
            let mx = &pts.kx[prim.node(u2).max as usize];
            if !prim.is_canonical_suffix(u, |i| pts.kx[i as usize].cmp(mx) != Ordering::Less) {
                continue;
            }
            vs.clear();
            sec.canonical_prefix(prim.node(u2).assoc, |i| pts.ky[i as usize].cmp(qy) != Ordering::Greater, &mut vs);
            for &v2 in &vs {
                let my = &pts.ky[sec.node(v2).max as usize];
                if sec.is_canonical_suffix(v, |i| pts.ky[i as usize].cmp(my) != Ordering::Less) {
                    out.push(v2);
                }
            }
        }
    }

    /// Mirror of [`Self::w_side_groups`] for upper-right nodes at `(u, v)`.
    fn z_side_groups(&self, u: u32, v: u32, out: &mut Vec<u32>) {
        let pts = &self.pts;
        let (prim, sec) = (&self.prim, &self.sec);
        let qx = &pts.kx[prim.node(u).max as usize];
        let qy = &pts.ky[sec.node(v).max as usize];
        let (mut us, mut vs) = (Vec::new(), Vec::new());
        prim.canonical_suffix(self.proot, |i| pts.kx[i as usize].cmp(qx) != Ordering::Less, &mut us);
        for &u2 in &us {
            let mx = &pts.kx[prim.node(u2).min as usize];
            if !prim.is_canonical_prefix(u, |i| pts.kx[i as usize].cmp(mx) != Ordering::Greater) {
                continue;
            }
            vs.clear();
            sec.canonical_suffix(prim.node(u2).assoc, |i| pts.ky[i as usize].cmp(qy) != Ordering::Less, &mut vs);
            for &v2 in &vs {
                let my = &pts.ky[sec.node(v2).min as usize];
                if sec.is_canonical_prefix(v, |i| pts.ky[i as usize].cmp(my) != Ordering::Greater) {
                    out.push(v2);
                }
            }
        }
    }

    /// Upper-right partners of lower-left node `w` inside the tournaments of `groups`.
    fn w_partners(&self, w: u32, groups: &[u32], scratch: &mut Vec<u32>, out: &mut Vec<u32>) {
        let pts = &self.pts;
        let tf = &self.tour.forest;
        let qg = &pts.kg[tf.node(w).min as usize];
        let parent = tf.node(w).parent;
        for &v2 in groups {
            // every partner z has pmin(w) <= max γ(z) < min γ(w)
            let root = tf.node(self.sec.node(v2).assoc);
            if pts.kg[root.min as usize].cmp(qg) != Ordering::Less
                || (parent != NIL && pts.kg[root.max as usize].cmp(&pts.kg[tf.node(parent).min as usize]) == Ordering::Less)
            {
                continue;
            }
            scratch.clear();
            tf.canonical_prefix(self.sec.node(v2).assoc, |i| pts.kg[i as usize].cmp(qg) == Ordering::Less, scratch);
            for &z in scratch.iter() {
                let mg = &pts.kg[tf.node(z).max as usize];
                if tf.is_canonical_suffix(w, |i| pts.kg[i as usize].cmp(mg) == Ordering::Greater) {
                    out.push(z);
                }
            }
        }
    }

    fn z_partners(&self, z: u32, groups: &[u32], scratch: &mut Vec<u32>, out: &mut Vec<u32>) {
        let pts = &self.pts;
        let tf = &self.tour.forest;
        let qg = &pts.kg[tf.node(z).max as usize];
        let parent = tf.node(z).parent;
        for &v2 in groups {
            let root = tf.node(self.sec.node(v2).assoc);
            if pts.kg[root.max as usize].cmp(qg) != Ordering::Greater
                || (parent != NIL && pts.kg[root.min as usize].cmp(&pts.kg[tf.node(parent).max as usize]) == Ordering::Greater)
            {
                continue;
            }
            scratch.clear();
            tf.canonical_suffix(self.sec.node(v2).assoc, |i| pts.kg[i as usize].cmp(qg) == Ordering::Greater, scratch);
            for &w in scratch.iter() {
                let mg = &pts.kg[tf.node(w).min as usize];
                if tf.is_canonical_prefix(z, |i| pts.kg[i as usize].cmp(mg) == Ordering::Less) {
                    out.push(w);
                }
            }
        }
    }

    fn valid(&self, m: &Marked) -> bool {
        self.tour.forest.alive(m.addr.w) && self.tour.forest.node(m.addr.w).ver == m.ver
    }

    fn finish_update(&mut self, now: &S) {
        let affected = std::mem::take(&mut self.affected);
        let mut affected: Vec<Marked> = affected.into_iter().filter(|m| self.valid(m)).collect();
        affected.sort_unstable_by_key(|m| (m.addr.u, m.addr.v, m.addr.w));
        self.relinked_nodes += affected.len() as u64;
        for m in &affected {
            let x = m.addr.w;
            for side in 0..2 {
                if self.amask[x as usize] & (1 << side) != 0 {
                    self.drop_side(x, side);
                }
            }
        }
        let (mut groups, mut scratch, mut partners) = (Vec::new(), Vec::new(), Vec::new());
        for side in 0..2 {
            if side == 1 && self.all_affected {
                break;
            }
            let bit = 1u8 << side;
            for chunk in affected.chunk_by(|a, b| (a.addr.u, a.addr.v) == (b.addr.u, b.addr.v)) {
                if chunk.iter().all(|m| self.amask[m.addr.w as usize] & bit == 0) {
                    continue;
                }
                let (u, v) = (chunk[0].addr.u, chunk[0].addr.v);
                groups.clear();
                if side == 0 {
                    self.w_side_groups(u, v, &mut groups);
                } else {
                    self.z_side_groups(u, v, &mut groups);
                }
                for m in chunk {
                    let x = m.addr.w;
                    if self.amask[x as usize] & bit == 0 {
                        continue;
                    }
                    partners.clear();
                    if side == 0 {
                        self.w_partners(x, &groups, &mut scratch, &mut partners);
                        for &z in &partners {
                            self.add_link(x, z, now);
                        }
                    } else {
                        self.z_partners(x, &groups, &mut scratch, &mut partners);
                        for &w in &partners {
                            if !self.marked(w, SIDE_L) {
                                self.add_link(w, x, now);
                            }
                        }
                    }
                }
            }
        }
        let relink = std::mem::take(&mut self.relink);
        for &(x, ver, roles) in &relink {
            if !self.tour.forest.alive(x) || self.tour.forest.node(x).ver != ver {
                continue;
            }
            for side in 0..2 {
                if roles[side] && !self.marked(x, 1 << side) {
                    self.relink_side(x, side, now);
                }
            }
        }
        self.affected = affected;
        self.affected.clear();
        self.relink = relink;
        self.relink.clear();
    }

    // ----- building -----

    /// Builds the tournament of secondary node `v` (owned by primary `u`) over
    /// `items`, sorted by γ.
    fn build_tournament(&mut self, u: u32, v: u32, items: &[u32], now: &S) {
        let (root, created) = self.tour.build(items, &self.pts, now);
        self.grow();
        self.sec.set_assoc(v, root);
        for &x in &created {
            self.lhead[x as usize] = [NIL; 2];
        }
        for &x in &created {
            self.tctx[x as usize] = ctx_of(&self.tour.forest, x);
            self.mark_affected(u, v, x, BOTH);
        }
    }

    /// Builds the secondary tree of primary node `u` over `items`, sorted by y.
    fn build_secondary_from(&mut self, u: u32, items: &[u32], now: &S) {
        let (root, created) = self.sec.from_sorted(items);
        self.grow();
        self.prim.set_assoc(u, root);
        let mut stack: Vec<Vec<u32>> = Vec::new();
        for &v in &created {
            let n = *self.sec.node(v);
            let list = if n.left == NIL {
                vec![n.min]
            } else {
                let r = stack.pop().unwrap();
                let l = stack.pop().unwrap();
                let pts = &self.pts;
                merge_by(&l, &r, |a, b| pts.cmp_g(a, b))
            };
            self.sctx[v as usize] = ctx_of(&self.sec, v);
            self.build_tournament(u, v, &list, now);
            stack.push(list);
        }
    }

    fn build_secondary(&mut self, u: u32, now: &S) {
        let mut items = self.prim.leaves(u);
        let pts = &self.pts;
        items.sort_by(|&a, &b| pts.cmp_y(a, b));
        self.build_secondary_from(u, &items, now);
    }

    fn free_tournament(&mut self, root: u32) {
        let mut nodes = Vec::new();
        self.tour.forest.subtree_nodes(root, &mut nodes);
        for &x in &nodes {
            self.forget(x);
        }
        nodes.clear();
        self.tour.free(root, &mut nodes);
    }

    fn free_secondary(&mut self, root: u32) {
        let mut nodes = Vec::new();
        self.sec.subtree_nodes(root, &mut nodes);
        for &v in &nodes {
            let t = self.sec.node(v).assoc;
            self.free_tournament(t);
        }
        nodes.clear();
        self.sec.free_tree(root, &mut nodes);
    }

    /// Bulk-builds the structure over `points` (indexed by their slots).
    pub fn build(&mut self, points: &[(u32, &WeightedPoint<S>)], now: &S) {
        assert!(self.is_empty() && self.proot == NIL, "build on a non-empty instance");
        for &(slot, p) in points {
            self.pts.set(slot, p, &self.frame);
        }
        self.len = points.len();
        if points.is_empty() {
            return;
        }
        self.begin_update();
        self.all_affected = true;
        let mut xs: Vec<u32> = points.iter().map(|&(s, _)| s).collect();
        let pts = &self.pts;
        xs.sort_by(|&a, &b| pts.cmp_x(a, b));
        let (root, created) = self.prim.from_sorted(&xs);
        self.proot = root;
        self.grow();
        let mut stack: Vec<Vec<u32>> = Vec::new();
        for &u in &created {
            let n = *self.prim.node(u);
            let list = if n.left == NIL {
                vec![n.min]
            } else {
                let r = stack.pop().unwrap();
                let l = stack.pop().unwrap();
                let pts = &self.pts;
                merge_by(&l, &r, |a, b| pts.cmp_y(a, b))
            };
            self.pctx[u as usize] = ctx_of(&self.prim, u);
            self.build_secondary_from(u, &list, now);
            stack.push(list);
        }
        self.finish_update(now);
    }

    // ----- updates -----

    fn check_ctx(&mut self, layer: usize, touched: &[u32], u: u32, v: u32) {
        let forest = match layer {
            0 => &self.prim,
            1 => &self.sec,
            _ => &self.tour.forest,
        };
        let mut cand: Vec<u32> = Vec::with_capacity(touched.len() * 3);
        for &x in touched {
            if !forest.alive(x) {
                continue;
            }
            cand.push(x);
            let n = forest.node(x);
            if n.left != NIL {
                cand.push(n.left);
                cand.push(n.right);
            }
        }
        cand.sort_unstable();
        cand.dedup();
        let mut changed = Vec::new();
        for x in cand {
            let c = ctx_of(forest, x);
            let cache = match layer {
                0 => &mut self.pctx,
                1 => &mut self.sctx,
                _ => &mut self.tctx,
            };
            let sides = ctx_sides(&cache[x as usize], &c);
            if sides != 0 {
                cache[x as usize] = c;
                changed.push((x, sides));
            }
        }
        for (x, sides) in changed {
            match layer {
                0 => self.mark_secondary(x, sides),
                1 => self.mark_tournament(u, x, sides),
                _ => self.mark_affected(u, v, x, sides),
            }
        }
    }

    fn update_tournament(&mut self, u: u32, v: u32, slot: u32, ins: bool, now: &S) {
        let root = self.sec.node(v).assoc;
        let (rep, changed) = if ins {
            self.tour.insert(root, slot, &self.pts, now)
        } else {
            self.tour.delete(root, slot, &self.pts, now)
        }
        .expect("tournament membership out of sync");
        self.grow();
        self.sec.set_assoc(v, rep.root);
        for &x in &rep.removed {
            self.forget(x);
        }
        for &x in &rep.created {
            self.lhead[x as usize] = [NIL; 2];
            self.mark_affected(u, v, x, BOTH);
        }
        self.check_ctx(2, &rep.touched, u, v);
        for (x, c) in changed {
            let ver = self.tour.forest.node(x).ver;
            self.relink.push((x, ver, c));
        }
    }

    fn update_secondary(&mut self, u: u32, slot: u32, ins: bool, now: &S) {
        let root = self.prim.node(u).assoc;
        let pts = &self.pts;
        let rep: UpdateReport = if ins {
            self.sec.insert(root, slot, |a, b| pts.cmp_y(a, b))
        } else {
            self.sec.delete(root, slot, |a, b| pts.cmp_y(a, b))
        }
        .expect("secondary membership out of sync");
        self.grow();
        self.prim.set_assoc(u, rep.root);
        for &h in &rep.discarded {
            self.free_tournament(h);
        }
        for &v in &rep.rebuild {
            let mut items = self.sec.leaves(v);
            let pts = &self.pts;
            items.sort_by(|&a, &b| pts.cmp_g(a, b));
            self.build_tournament(u, v, &items, now);
        }
        for &v in &rep.stale {
            self.update_tournament(u, v, slot, ins, now);
        }
        for &v in &rep.moved {
            if self.sec.alive(v) && self.sec.node(v).assoc != NIL {
                self.sctx[v as usize] = ctx_of(&self.sec, v);
                self.mark_tournament(u, v, BOTH);
            }
        }
        self.check_ctx(1, &rep.touched, u, NIL);
    }

    fn apply_primary(&mut self, rep: UpdateReport, slot: u32, ins: bool, now: &S) {
        self.proot = rep.root;
        self.grow();
        for &h in &rep.discarded {
            self.free_secondary(h);
        }
        for &u in &rep.rebuild {
            self.build_secondary(u, now);
        }
        for &u in &rep.stale {
            self.update_secondary(u, slot, ins, now);
        }
        for &u in &rep.moved {
            if self.prim.alive(u) && self.prim.node(u).assoc != NIL {
                self.pctx[u as usize] = ctx_of(&self.prim, u);
                self.mark_secondary(u, BOTH);
            }
        }
        self.check_ctx(0, &rep.touched, NIL, NIL);
        self.finish_update(now);
    }

    /// Adds `p` under `slot` at time `now`.
    pub fn insert(&mut self, slot: u32, p: &WeightedPoint<S>, now: &S) {
        self.pts.set(slot, p, &self.frame);
        self.begin_update();
        let pts = &self.pts;
        let rep = self
            .prim
            .insert(self.proot, slot, |a, b| pts.cmp_x(a, b))
            .expect("slot already present");
        self.len += 1;
        self.apply_primary(rep, slot, true, now);
    }

    pub fn delete(&mut self, slot: u32, now: &S) {
        self.begin_update();
        let pts = &self.pts;
        let rep = self
            .prim
            .delete(self.proot, slot, |a, b| pts.cmp_x(a, b))
            .expect("slot not present");
        self.len -= 1;
        self.apply_primary(rep, slot, false, now);
    }

    // ----- events -----

    pub fn next_tournament_time(&self) -> Option<&Time<S>> {
        self.tour.queue.peek().map(|(t, _, _)| t)
    }

    pub fn next_link_time(&self) -> Option<&Time<S>> {
        self.lqueue.peek().map(|(t, _, _)| t)
    }

    /// Pops and repairs one tournament certificate failing at `now`.
    pub fn process_tournament_event(&mut self, now: &S) -> Option<TourEvent> {
        let (_, ev) = self.tour.pop_due(&Time::Finite(now.clone()))?;
        let changed = self.tour.handle_failure(ev.node, ev.role, &self.pts, now);
        let side = ev.role as usize;
        for x in changed {
            self.relink_side(x, side, now);
        }
        Some(ev)
    }

    /// Leaves under `x` whose `role` trajectory ties with the winner at `t`.
    fn tied_leaves(&self, x: u32, role: Role, t: &S, out: &mut Vec<u64>) {
        let target = motion(&self.pts, self.tour.winner(x, role), role);
        let mut stack = vec![x];
        while let Some(y) = stack.pop() {
            let m = motion(&self.pts, self.tour.winner(y, role), role);
            if S::lin_cmp(m.0, m.1, target.0, target.1, t, self.eps) != Ordering::Equal {
                continue;
            }
            let n = self.tour.forest.node(y);
            if n.left == NIL {
                out.push(self.pts.id[n.min as usize]);
            } else {
                stack.push(n.left);
                stack.push(n.right);
            }
        }
    }

    /// Smallest `(min id, max id)` over pairs that touch at `t`, given that
    /// `t` is the earliest link failure time of this instance.
    pub fn best_pair_at(&self, t: &S) -> Option<(u64, u64)> {
        let mut best: Option<(u64, u64)> = None;
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for h in self.lqueue.min_ties() {
            let (when, &id) = self.lqueue.get(h).unwrap();
            if when.finite().is_none_or(|w| w.cmp_exact(t) != Ordering::Equal) {
                continue;
            }
            let l = self.links[id as usize];
            a.clear();
            b.clear();
            self.tied_leaves(l.w, Role::Min, t, &mut a);
            self.tied_leaves(l.z, Role::Max, t, &mut b);
            let (Some(&a0), Some(&b0)) = (a.iter().min(), b.iter().min()) else {
                continue;
            };
            let pair = (a0.min(b0), a0.max(b0));
            if best.is_none_or(|bp| pair < bp) {
                best = Some(pair);
            }
        }
        best
    }

    /// Points whose squares meet the square of `q` (frame-transformed here)
    /// at time `now`, restricted to the pairs this frame is responsible for.
    pub fn witnesses(&self, q: &WeightedPoint<S>, now: &S, out: &mut Vec<u64>) {
        if self.proot == NIL {
            return;
        }
        let (kx, ky, kg) = self.frame.keys(q);
        let hw = q.w.half();
        let qp = QueryPoint3 { x: kx.clone(), y: ky, g: kg };
        // points dominating q: lower-left corner reaches q's upper-right corner
        let reach_r = kx.v.add(&hw.mul(now));
        for a in self.ql(&qp) {
            self.collect_le(a.w, &reach_r, now, out);
        }
        // points dominated by q: upper-right corner reaches q's lower-left corner
        let reach_l = kx.v.sub(&hw.mul(now));
        for a in self.qr(&qp) {
            self.collect_ge(a.w, &reach_l, now, out);
        }
    }

    fn collect_le(&self, x: u32, bound: &S, now: &S, out: &mut Vec<u64>) {
        let zero = S::from_int(0);
        let mut stack = vec![x];
        while let Some(y) = stack.pop() {
            let (a, b) = motion(&self.pts, self.tour.winner(y, Role::Min), Role::Min);
            if S::lin_cmp(a, b, bound, &zero, now, self.eps) == Ordering::Greater {
                continue;
            }
            let n = self.tour.forest.node(y);
            if n.left == NIL {
                out.push(self.pts.id[n.min as usize]);
            } else {
                stack.push(n.left);
                stack.push(n.right);
            }
        }
    }

    fn collect_ge(&self, x: u32, bound: &S, now: &S, out: &mut Vec<u64>) {
        let zero = S::from_int(0);
        let mut stack = vec![x];
        while let Some(y) = stack.pop() {
            let (a, b) = motion(&self.pts, self.tour.winner(y, Role::Max), Role::Max);
            if S::lin_cmp(a, b, bound, &zero, now, self.eps) == Ordering::Less {
                continue;
            }
            let n = self.tour.forest.node(y);
            if n.left == NIL {
                out.push(self.pts.id[n.min as usize]);
            } else {
                stack.push(n.left);
                stack.push(n.right);
            }
        }
    }

    // ----- inspection -----

    /// Every tournament node with its address.
    pub fn addresses(&self) -> Vec<NodeAddress> {
        let mut out = Vec::new();
        let (mut us, mut vs, mut ws) = (Vec::new(), Vec::new(), Vec::new());
        self.prim.subtree_nodes(self.proot, &mut us);
        for &u in &us {
            vs.clear();
            self.sec.subtree_nodes(self.prim.node(u).assoc, &mut vs);
            for &v in &vs {
                ws.clear();
                self.tour.forest.subtree_nodes(self.sec.node(v).assoc, &mut ws);
                out.extend(ws.iter().map(|&w| NodeAddress { u, v, w }));
            }
        }
        out
    }

    /// Slots of the stored points, in frame-x order.
    pub fn slots(&self) -> Vec<u32> {
        self.prim.leaves(self.proot)
    }

    /// Leaf items of a tournament node.
    pub fn items_of(&self, w: u32) -> Vec<u32> {
        self.tour.forest.leaves(w)
    }

    pub fn max_links_per_node(&self) -> usize {
        let mut best = 0;
        for x in 0..self.lhead.len() as u32 {
            if !self.tour.forest.alive(x) {
                continue;
            }
            let mut c = 0;
            for side in 0..2 {
                let mut id = self.lhead[x as usize][side];
                while id != NIL {
                    c += 1;
                    id = self.links[id as usize].next[side];
                }
            }
            best = best.max(c);
        }
        best
    }

    /// Structural self-check: balance, summaries, associated sets, winners,
    /// cached summaries and link certificates.
    pub fn check(&self, now: &S) -> Result<(), String> {
        let pts = &self.pts;
        self.prim.check_invariants(self.proot, |a, b| pts.cmp_x(a, b))?;
        let mut us = Vec::new();
        self.prim.subtree_nodes(self.proot, &mut us);
        if self.proot != NIL && self.prim.node(self.proot).size as usize != self.len {
            return Err("size mismatch".into());
        }
        for &u in &us {
            if self.pctx[u as usize] != ctx_of(&self.prim, u) {
                return Err(format!("stale primary summary cache at {u}"));
            }
            let mut want = self.prim.leaves(u);
            want.sort_by(|&a, &b| pts.cmp_y(a, b));
            let sroot = self.prim.node(u).assoc;
            self.sec.check_invariants(sroot, |a, b| pts.cmp_y(a, b))?;
            if self.sec.leaves(sroot) != want {
                return Err(format!("secondary set of {u} wrong"));
            }
            let mut vs = Vec::new();
            self.sec.subtree_nodes(sroot, &mut vs);
            for &v in &vs {
                if self.sctx[v as usize] != ctx_of(&self.sec, v) {
                    return Err(format!("stale secondary summary cache at {v}"));
                }
                let mut want = self.sec.leaves(v);
                want.sort_by(|&a, &b| pts.cmp_g(a, b));
                let troot = self.sec.node(v).assoc;
                self.tour.forest.check_invariants(troot, |a, b| pts.cmp_g(a, b))?;
                if self.tour.forest.leaves(troot) != want {
                    return Err(format!("tournament set of {v} wrong"));
                }
                self.tour.check(troot, pts, now)?;
                let mut ws = Vec::new();
                self.tour.forest.subtree_nodes(troot, &mut ws);
                for &w in &ws {
                    if self.tctx[w as usize] != ctx_of(&self.tour.forest, w) {
                        return Err(format!("stale tournament summary cache at {w}"));
                    }
                }
            }
        }
        for (id, l) in self.links.iter().enumerate() {
            if l.w == NIL {
                continue;
            }
            let h = l.h.ok_or("link without certificate")?;
            let (t, _) = self.lqueue.get(h).ok_or("dead link certificate")?;
            let want = self.link_time(l.w, l.z, now);
            if t.cmp_time(&want) != Ordering::Equal {
                return Err(format!("link {id} certificate time {t:?} expected {want:?}"));
            }
        }
        Ok(())
    }

    /// Links as recomputed from scratch on the current skeleton.
    pub fn links_from_scratch(&self, now: &S) -> BTreeSet<(u32, u32)> {
        let mut fresh = self.clone();
        fresh.begin_update();
        for a in self.addresses() {
            fresh.mark_affected(a.u, a.v, a.w, BOTH);
        }
        fresh.all_affected = true;
        fresh.finish_update(now);
        fresh.link_pairs().into_iter().collect()
    }

    /// Links by the defining relation, evaluated on explicit leaf sets.
    pub fn links_by_definition(&self) -> BTreeSet<(u32, u32)> {
        struct Info<S> {
            a: NodeAddress,
            lo: QueryPoint3<S>,
            hi: QueryPoint3<S>,
            // (x, y, γ) extremes of the parents' leaf sets; None at a root
            parent_lo: [Option<PKey<S>>; 3],
            parent_hi: [Option<PKey<S>>; 3],
        }
        let pts = &self.pts;
        let ext = |items: &[u32], f: &dyn Fn(u32) -> PKey<S>, max: bool| -> PKey<S> {
            items
                .iter()
                .map(|&i| f(i))
                .reduce(|a, b| {
                    let gt = b.cmp(&a) == Ordering::Greater;
                    if gt == max { b } else { a }
                })
                .unwrap()
        };
        let fx = |i: u32| pts.kx[i as usize].clone();
        let fy = |i: u32| pts.ky[i as usize].clone();
        let fg = |i: u32| pts.kg[i as usize].clone();
        let infos: Vec<Info<S>> = self
            .addresses()
            .into_iter()
            .map(|a| {
                let lu = self.prim.leaves(a.u);
                let lv = self.sec.leaves(a.v);
                let lw = self.tour.forest.leaves(a.w);
                let par = |f: &Forest, x: u32| {
                    let p = f.node(x).parent;
                    if p == NIL { None } else { Some(f.leaves(p)) }
                };
                let pu = par(&self.prim, a.u);
                let pv = par(&self.sec, a.v);
                let pw = par(&self.tour.forest, a.w);
                Info {
                    a,
                    lo: QueryPoint3 { x: ext(&lu, &fx, false), y: ext(&lv, &fy, false), g: ext(&lw, &fg, false) },
                    hi: QueryPoint3 { x: ext(&lu, &fx, true), y: ext(&lv, &fy, true), g: ext(&lw, &fg, true) },
                    parent_lo: [
                        pu.as_ref().map(|l| ext(l, &fx, false)),
                        pv.as_ref().map(|l| ext(l, &fy, false)),
                        pw.as_ref().map(|l| ext(l, &fg, false)),
                    ],
                    parent_hi: [
                        pu.as_ref().map(|l| ext(l, &fx, true)),
                        pv.as_ref().map(|l| ext(l, &fy, true)),
                        pw.as_ref().map(|l| ext(l, &fg, true)),
                    ],
                }
            })
            .collect();
        // node is canonical for a suffix query iff all its leaves qualify and
        // not all of its parent's leaves do
        let in_ql = |n: &Info<S>, q: &QueryPoint3<S>| {
            let ge = |k: &PKey<S>, b: &PKey<S>| k.cmp(b) != Ordering::Less;
            let gt = |k: &PKey<S>, b: &PKey<S>| k.cmp(b) == Ordering::Greater;
            ge(&n.lo.x, &q.x)
                && n.parent_lo[0].as_ref().is_none_or(|p| !ge(p, &q.x))
                && ge(&n.lo.y, &q.y)
                && n.parent_lo[1].as_ref().is_none_or(|p| !ge(p, &q.y))
                && gt(&n.lo.g, &q.g)
                && n.parent_lo[2].as_ref().is_none_or(|p| !gt(p, &q.g))
        };
        let in_qr = |n: &Info<S>, q: &QueryPoint3<S>| {
            let le = |k: &PKey<S>, b: &PKey<S>| k.cmp(b) != Ordering::Greater;
            let lt = |k: &PKey<S>, b: &PKey<S>| k.cmp(b) == Ordering::Less;
            le(&n.hi.x, &q.x)
                && n.parent_hi[0].as_ref().is_none_or(|p| !le(p, &q.x))
                && le(&n.hi.y, &q.y)
                && n.parent_hi[1].as_ref().is_none_or(|p| !le(p, &q.y))
                && lt(&n.hi.g, &q.g)
                && n.parent_hi[2].as_ref().is_none_or(|p| !lt(p, &q.g))
        };
        let mut out = BTreeSet::new();
        for w in &infos {
            for z in &infos {
                if in_ql(w, &z.hi) && in_qr(z, &w.lo) {
                    out.insert((w.a.w, z.a.w));
                }
            }
        }
        out
    }

    /// Pairs `(p, q)` of slots with `p` in `D+(q)` in this frame.
    pub fn dplus_pairs(&self) -> HashSet<(u32, u32)> {
        let slots = self.prim.leaves(self.proot);
        let pts = &self.pts;
        let mut out = HashSet::new();
        for &p in &slots {
            for &q in &slots {
                if p != q
                    && pts.cmp_x(p, q) == Ordering::Greater
                    && pts.cmp_y(p, q) == Ordering::Greater
                    && pts.cmp_g(p, q) == Ordering::Greater
                {
                    out.insert((p, q));
                }
            }
        }
        out
    }

    /// Earliest link failure over the structure, with the canonical pair.
    pub fn first_failure(&self) -> Option<(Time<S>, u64, u64)> {
        let t = self.next_link_time()?.clone();
        let tf = t.finite()?.clone();
        let (a, b) = self.best_pair_at(&tf)?;
        Some((t, a, b))
    }

    pub fn tournament_events(&self) -> u64 {
        self.tour.events
    }

    /// Sanity helper for tests: every live link pairs points with the right order.
    pub fn link_covers(&self, w: u32, z: u32) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for p in self.items_of(w) {
            for q in self.items_of(z) {
                out.push((p, q));
            }
        }
        out
    }

}
