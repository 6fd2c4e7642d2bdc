//! Leaf-oriented BB[α] trees stored in a shared arena.
//!
//! Items are `u32` handles; the caller supplies the order. Every node keeps the
//! size of its leaf set and its minimum and maximum item, and may own an
//! associated structure (an opaque `u32` handle). When a rotation changes a
//! node's leaf set, the update report tells the caller which associated
//! structures moved, which must be rebuilt and which still lack (or still hold)
//! the updated item.

use std::cmp::Ordering;

use thiserror::Error;

pub const NIL: u32 = u32::MAX;

const STALE: u8 = 1;
const REBUILD: u8 = 2;
const SEEN: u8 = 4;

#[derive(Clone, Copy, Debug)]
pub struct Node {
    pub parent: u32,
    pub left: u32,
    pub right: u32,
    /// Number of leaves below (1 for a leaf, 0 for a free slot).
    pub size: u32,
    pub min: u32,
    pub max: u32,
    pub assoc: u32,
    /// Bumped every time the slot is reallocated.
    pub ver: u32,
    flags: u8,
}

impl Node {
    fn blank() -> Self {
        Node {
            parent: NIL,
            left: NIL,
            right: NIL,
            size: 0,
            min: NIL,
            max: NIL,
            assoc: NIL,
            ver: 0,
            flags: 0,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.left == NIL
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("item {0} is already present")]
    Duplicate(u32),
    #[error("item {0} is not present")]
    Missing(u32),
}

/// Outcome of one insertion or deletion.
#[derive(Debug, Default, Clone)]
pub struct UpdateReport {
    pub root: u32,
    /// The new leaf on insertion.
    pub leaf: u32,
    /// Freshly allocated nodes.
    pub created: Vec<u32>,
    /// Freed nodes. Their associated handles are listed in `discarded`.
    pub removed: Vec<u32>,
    /// Associated handles that no longer belong to any node.
    pub discarded: Vec<u32>,
    /// Live nodes that took over the associated structure of another node.
    pub moved: Vec<u32>,
    /// Nodes whose associated structure must be built from their leaf set.
    pub rebuild: Vec<u32>,
    /// Nodes whose associated structure lacks (insert) or still holds (delete) the item.
    pub stale: Vec<u32>,
    /// Live nodes whose children or summaries may have changed.
    pub touched: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct Forest {
    nodes: Vec<Node>,
    free: Vec<u32>,
    alpha: f64,
    live: usize,
    /// Nodes visited by the running update, for report collection.
    scratch: Vec<u32>,
    discarded: Vec<u32>,
    moved: Vec<u32>,
}

impl Forest {
    pub fn new(alpha: f64) -> Self {
        assert!(alpha > 0.0 && alpha < 0.3, "alpha out of range");
        Forest {
            nodes: Vec::new(),
            free: Vec::new(),
            alpha,
            live: 0,
            scratch: Vec::new(),
            discarded: Vec::new(),
            moved: Vec::new(),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Upper bound on node ids handed out so far.
    pub fn capacity(&self) -> usize {
        self.nodes.len()
    }

    pub fn live_nodes(&self) -> usize {
        self.live
    }

    #[inline]
    pub fn node(&self, i: u32) -> &Node {
        &self.nodes[i as usize]
    }

    #[inline]
    pub fn is_leaf(&self, i: u32) -> bool {
        self.nodes[i as usize].left == NIL
    }

    pub fn alive(&self, i: u32) -> bool {
        (i as usize) < self.nodes.len() && self.nodes[i as usize].size > 0
    }

    pub fn set_assoc(&mut self, i: u32, a: u32) {
        self.nodes[i as usize].assoc = a;
    }

    fn alloc(&mut self) -> u32 {
        self.live += 1;
        let i = match self.free.pop() {
            Some(i) => i,
            None => {
                self.nodes.push(Node::blank());
                (self.nodes.len() - 1) as u32
            }
        };
        let ver = self.nodes[i as usize].ver.wrapping_add(1);
        self.nodes[i as usize] = Node { ver, ..Node::blank() };
        i
    }

    fn release(&mut self, i: u32) {
        let n = &mut self.nodes[i as usize];
        debug_assert!(n.size > 0);
        n.size = 0;
        n.parent = NIL;
        n.left = NIL;
        n.right = NIL;
        n.assoc = NIL;
        n.flags = 0;
        self.live -= 1;
        self.free.push(i);
    }

    fn new_leaf(&mut self, item: u32) -> u32 {
        let i = self.alloc();
        let n = &mut self.nodes[i as usize];
        n.size = 1;
        n.min = item;
        n.max = item;
        i
    }

    fn pull(&mut self, x: u32) {
        let (l, r) = (self.nodes[x as usize].left, self.nodes[x as usize].right);
        let (ls, lmin) = (self.nodes[l as usize].size, self.nodes[l as usize].min);
        let (rs, rmax) = (self.nodes[r as usize].size, self.nodes[r as usize].max);
        let n = &mut self.nodes[x as usize];
        n.size = ls + rs;
        n.min = lmin;
        n.max = rmax;
    }

    fn mark(&mut self, x: u32) {
        let n = &mut self.nodes[x as usize];
        if n.flags & SEEN == 0 {
            n.flags |= SEEN;
            self.scratch.push(x);
        }
    }

    fn replace_child(&mut self, parent: u32, old: u32, new: u32, root: &mut u32) {
        self.nodes[new as usize].parent = parent;
        if parent == NIL {
            *root = new;
        } else if self.nodes[parent as usize].left == old {
            self.nodes[parent as usize].left = new;
        } else {
            self.nodes[parent as usize].right = new;
        }
    }

    /// `y` now spans exactly the leaves `x` used to span.
    fn hand_over(&mut self, x: u32, y: u32) {
        let ya = self.nodes[y as usize].assoc;
        if ya != NIL {
            self.discarded.push(ya);
        }
        let (xa, xf) = (self.nodes[x as usize].assoc, self.nodes[x as usize].flags);
        let yn = &mut self.nodes[y as usize];
        yn.assoc = xa;
        yn.flags = (yn.flags & SEEN) | (xf & (STALE | REBUILD));
        if xa != NIL {
            self.moved.push(y);
        }
        let xn = &mut self.nodes[x as usize];
        xn.assoc = NIL;
        xn.flags = (xn.flags & SEEN) | REBUILD;
    }

    fn rotate_left(&mut self, x: u32, root: &mut u32) -> u32 {
        let y = self.nodes[x as usize].right;
        let b = self.nodes[y as usize].left;
        let p = self.nodes[x as usize].parent;
        self.nodes[x as usize].right = b;
        self.nodes[b as usize].parent = x;
        self.nodes[y as usize].left = x;
        self.nodes[x as usize].parent = y;
        self.replace_child(p, x, y, root);
        self.pull(x);
        self.pull(y);
        self.hand_over(x, y);
        self.mark(x);
        self.mark(y);
        y
    }

    fn rotate_right(&mut self, x: u32, root: &mut u32) -> u32 {
        let y = self.nodes[x as usize].left;
        let b = self.nodes[y as usize].right;
        let p = self.nodes[x as usize].parent;
        self.nodes[x as usize].left = b;
        self.nodes[b as usize].parent = x;
        self.nodes[y as usize].right = x;
        self.nodes[x as usize].parent = y;
        self.replace_child(p, x, y, root);
        self.pull(x);
        self.pull(y);
        self.hand_over(x, y);
        self.mark(x);
        self.mark(y);
        y
    }

    fn left_fraction(&self, x: u32) -> f64 {
        let n = &self.nodes[x as usize];
        self.nodes[n.left as usize].size as f64 / n.size as f64
    }

    pub fn is_balanced(&self, x: u32) -> bool {
        if self.is_leaf(x) {
            return true;
        }
        let rho = self.left_fraction(x);
        rho >= self.alpha && rho <= 1.0 - self.alpha
    }

    /// Restores balance at `x`; returns the root of the repaired subtree.
    fn rebalance(&mut self, x: u32, root: &mut u32) -> u32 {
        let d = 1.0 / (2.0 - self.alpha);
        let rho = self.left_fraction(x);
        let top = if rho < self.alpha {
            let y = self.nodes[x as usize].right;
            if self.left_fraction(y) <= d {
                self.rotate_left(x, root)
            } else {
                self.rotate_right(y, root);
                self.rotate_left(x, root)
            }
        } else {
            let y = self.nodes[x as usize].left;
            if self.left_fraction(y) >= 1.0 - d {
                self.rotate_right(x, root)
            } else {
                self.rotate_left(y, root);
                self.rotate_right(x, root)
            }
        };
        let n = self.nodes[top as usize];
        if !(self.is_balanced(top) && self.is_balanced(n.left) && self.is_balanced(n.right)) {
            self.rebuild_subtree(top, root);
        }
        top
    }

    /// Reshapes the subtree at `top` into a perfectly balanced one, reusing
    /// its node ids. `top` keeps its id and its associated structure.
    fn rebuild_subtree(&mut self, top: u32, root: &mut u32) {
        let mut leaves = Vec::new();
        let mut internal = Vec::new();
        let mut stack = vec![top];
        while let Some(x) = stack.pop() {
            let n = self.nodes[x as usize];
            if n.left == NIL {
                leaves.push(x);
            } else {
                if x != top {
                    internal.push(x);
                }
                stack.push(n.right);
                stack.push(n.left);
            }
        }
        for &x in &internal {
            let a = self.nodes[x as usize].assoc;
            if a != NIL {
                self.discarded.push(a);
            }
            let n = &mut self.nodes[x as usize];
            n.assoc = NIL;
            n.flags = (n.flags & SEEN) | REBUILD;
        }
        let parent = self.nodes[top as usize].parent;
        let mut pool = internal;
        self.shape(top, &leaves, &mut pool);
        self.nodes[top as usize].parent = parent;
        let _ = root;
        let mut stack = vec![top];
        while let Some(x) = stack.pop() {
            self.mark(x);
            let n = self.nodes[x as usize];
            if n.left != NIL {
                stack.push(n.left);
                stack.push(n.right);
            }
        }
    }

    /// Wires `x` as a balanced internal node over `leaves`, drawing extra
    /// internal nodes from `pool`.
    fn shape(&mut self, x: u32, leaves: &[u32], pool: &mut Vec<u32>) {
        debug_assert!(leaves.len() >= 2);
        let mid = leaves.len() / 2;
        let (ls, rs) = leaves.split_at(mid);
        let l = if ls.len() == 1 {
            ls[0]
        } else {
            let c = pool.pop().expect("pool");
            self.shape(c, ls, pool);
            c
        };
        let r = if rs.len() == 1 {
            rs[0]
        } else {
            let c = pool.pop().expect("pool");
            self.shape(c, rs, pool);
            c
        };
        self.nodes[x as usize].left = l;
        self.nodes[x as usize].right = r;
        self.nodes[l as usize].parent = x;
        self.nodes[r as usize].parent = x;
        self.pull(x);
    }

    fn walk_up_rebalancing(&mut self, mut x: u32, root: &mut u32) {
        while x != NIL {
            if !self.is_balanced(x) {
                x = self.rebalance(x, root);
            }
            x = self.nodes[x as usize].parent;
        }
    }

    fn finish(&mut self, root: u32, leaf: u32, created: Vec<u32>, removed: Vec<u32>) -> UpdateReport {
        let mut rep = UpdateReport {
            root,
            leaf,
            created,
            removed,
            discarded: std::mem::take(&mut self.discarded),
            ..Default::default()
        };
        let mut moved = std::mem::take(&mut self.moved);
        moved.sort_unstable();
        moved.dedup();
        rep.moved = moved
            .into_iter()
            .filter(|&y| self.nodes[y as usize].size != 0 && self.nodes[y as usize].assoc != NIL)
            .collect();
        for x in std::mem::take(&mut self.scratch) {
            let n = &mut self.nodes[x as usize];
            let f = n.flags;
            n.flags = 0;
            if n.size == 0 {
                continue;
            }
            rep.touched.push(x);
            if f & REBUILD != 0 {
                rep.rebuild.push(x);
            } else if f & STALE != 0 {
                rep.stale.push(x);
            }
        }
        rep
    }

    /// Inserts `item` into the tree rooted at `root` (`NIL` for empty).
    pub fn insert(
        &mut self,
        root: u32,
        item: u32,
        cmp: impl Fn(u32, u32) -> Ordering,
    ) -> Result<UpdateReport, TreeError> {
        let mut root = root;
        if root == NIL {
            let leaf = self.new_leaf(item);
            self.nodes[leaf as usize].flags = REBUILD;
            self.mark(leaf);
            return Ok(self.finish(leaf, leaf, vec![leaf], Vec::new()));
        }
        let mut x = root;
        while !self.is_leaf(x) {
            let n = self.nodes[x as usize];
            x = if cmp(item, self.nodes[n.left as usize].max) == Ordering::Less {
                n.left
            } else {
                n.right
            };
        }
        let old_item = self.nodes[x as usize].min;
        let side = cmp(item, old_item);
        if side == Ordering::Equal {
            return Err(TreeError::Duplicate(item));
        }
        let leaf = self.new_leaf(item);
        let m = self.alloc();
        let parent = self.nodes[x as usize].parent;
        let (l, r) = if side == Ordering::Less { (leaf, x) } else { (x, leaf) };
        self.nodes[m as usize].left = l;
        self.nodes[m as usize].right = r;
        self.nodes[l as usize].parent = m;
        self.nodes[r as usize].parent = m;
        self.replace_child(parent, x, m, &mut root);
        self.pull(m);
        self.nodes[m as usize].flags = REBUILD;
        self.nodes[leaf as usize].flags = REBUILD;
        self.mark(leaf);
        self.mark(m);
        let mut a = parent;
        while a != NIL {
            self.pull(a);
            self.nodes[a as usize].flags |= STALE;
            self.mark(a);
            a = self.nodes[a as usize].parent;
        }
        self.walk_up_rebalancing(parent, &mut root);
        Ok(self.finish(root, leaf, vec![leaf, m], Vec::new()))
    }

    /// Removes `item` from the tree rooted at `root`.
    pub fn delete(
        &mut self,
        root: u32,
        item: u32,
        cmp: impl Fn(u32, u32) -> Ordering,
    ) -> Result<UpdateReport, TreeError> {
        let mut root = root;
        if root == NIL {
            return Err(TreeError::Missing(item));
        }
        let mut x = root;
        while !self.is_leaf(x) {
            let n = self.nodes[x as usize];
            x = if cmp(item, self.nodes[n.left as usize].max) != Ordering::Greater {
                n.left
            } else {
                n.right
            };
        }
        if cmp(item, self.nodes[x as usize].min) != Ordering::Equal {
            return Err(TreeError::Missing(item));
        }
        let leaf_assoc = self.nodes[x as usize].assoc;
        if leaf_assoc != NIL {
            self.discarded.push(leaf_assoc);
        }
        let p = self.nodes[x as usize].parent;
        if p == NIL {
            self.release(x);
            return Ok(self.finish(NIL, NIL, Vec::new(), vec![x]));
        }
        let pn = self.nodes[p as usize];
        if pn.assoc != NIL {
            self.discarded.push(pn.assoc);
        }
        let sib = if pn.left == x { pn.right } else { pn.left };
        let g = pn.parent;
        self.replace_child(g, p, sib, &mut root);
        self.release(x);
        self.release(p);
        self.mark(sib);
        let mut a = g;
        while a != NIL {
            self.pull(a);
            self.nodes[a as usize].flags |= STALE;
            self.mark(a);
            a = self.nodes[a as usize].parent;
        }
        self.walk_up_rebalancing(g, &mut root);
        Ok(self.finish(root, NIL, Vec::new(), vec![x, p]))
    }

    /// Builds a perfectly balanced tree over `items` (already in order).
    /// Returns the root and all created nodes (children before parents).
    pub fn from_sorted(&mut self, items: &[u32]) -> (u32, Vec<u32>) {
        let mut created = Vec::with_capacity(2 * items.len());
        if items.is_empty() {
            return (NIL, created);
        }
        let root = self.build_rec(items, &mut created);
        (root, created)
    }

    fn build_rec(&mut self, items: &[u32], created: &mut Vec<u32>) -> u32 {
        if items.len() == 1 {
            let leaf = self.new_leaf(items[0]);
            created.push(leaf);
            return leaf;
        }
        let mid = items.len() / 2;
        let l = self.build_rec(&items[..mid], created);
        let r = self.build_rec(&items[mid..], created);
        let x = self.alloc();
        self.nodes[x as usize].left = l;
        self.nodes[x as usize].right = r;
        self.nodes[l as usize].parent = x;
        self.nodes[r as usize].parent = x;
        self.pull(x);
        created.push(x);
        x
    }

    /// Frees every node of the tree; returns the associated handles found.
    pub fn free_tree(&mut self, root: u32, freed: &mut Vec<u32>) -> Vec<u32> {
        let mut assocs = Vec::new();
        if root == NIL {
            return assocs;
        }
        let mut stack = vec![root];
        while let Some(x) = stack.pop() {
            let n = self.nodes[x as usize];
            if n.assoc != NIL {
                assocs.push(n.assoc);
            }
            if n.left != NIL {
                stack.push(n.left);
                stack.push(n.right);
            }
            freed.push(x);
            self.release(x);
        }
        assocs
    }

    /// Items under `x`, in order.
    pub fn leaves(&self, x: u32) -> Vec<u32> {
        let mut out = Vec::new();
        self.leaves_into(x, &mut out);
        out
    }

    pub fn leaves_into(&self, x: u32, out: &mut Vec<u32>) {
        if x == NIL {
            return;
        }
        let mut stack = vec![x];
        while let Some(x) = stack.pop() {
            let n = &self.nodes[x as usize];
            if n.left == NIL {
                out.push(n.min);
            } else {
                stack.push(n.right);
                stack.push(n.left);
            }
        }
    }

    /// All nodes of the subtree at `x`, parents before children.
    pub fn subtree_nodes(&self, x: u32, out: &mut Vec<u32>) {
        if x == NIL {
            return;
        }
        let mut stack = vec![x];
        while let Some(x) = stack.pop() {
            out.push(x);
            let n = &self.nodes[x as usize];
            if n.left != NIL {
                stack.push(n.right);
                stack.push(n.left);
            }
        }
    }

    pub fn height(&self, x: u32) -> usize {
        if x == NIL {
            return 0;
        }
        let n = &self.nodes[x as usize];
        if n.left == NIL {
            0
        } else {
            1 + self.height(n.left).max(self.height(n.right))
        }
    }

    pub fn depth(&self, mut x: u32) -> usize {
        let mut d = 0;
        while self.nodes[x as usize].parent != NIL {
            x = self.nodes[x as usize].parent;
            d += 1;
        }
        d
    }

    /// Membership in the canonical decomposition of `{item : pred(item)}`
    /// where `pred` is false then true along the order.
    #[inline]
    pub fn is_canonical_suffix(&self, x: u32, pred: impl Fn(u32) -> bool) -> bool {
        let n = &self.nodes[x as usize];
        pred(n.min) && (n.parent == NIL || !pred(self.nodes[n.parent as usize].min))
    }

    /// Mirror of [`Forest::is_canonical_suffix`] for predicates that are true then false.
    #[inline]
    pub fn is_canonical_prefix(&self, x: u32, pred: impl Fn(u32) -> bool) -> bool {
        let n = &self.nodes[x as usize];
        pred(n.max) && (n.parent == NIL || !pred(self.nodes[n.parent as usize].max))
    }

    /// Canonical nodes of `{item : pred(item)}`, `pred` false then true.
    pub fn canonical_suffix(&self, root: u32, pred: impl Fn(u32) -> bool, out: &mut Vec<u32>) {
        if root == NIL {
            return;
        }
        let mut x = root;
        loop {
            let n = &self.nodes[x as usize];
            if pred(n.min) {
                out.push(x);
                return;
            }
            if n.left == NIL || !pred(n.max) {
                return;
            }
            if pred(self.nodes[n.right as usize].min) {
                out.push(n.right);
                x = n.left;
            } else {
                x = n.right;
            }
        }
    }

    /// Canonical nodes of `{item : pred(item)}`, `pred` true then false.
    pub fn canonical_prefix(&self, root: u32, pred: impl Fn(u32) -> bool, out: &mut Vec<u32>) {
        if root == NIL {
            return;
        }
        let mut x = root;
        loop {
            let n = &self.nodes[x as usize];
            if pred(n.max) {
                out.push(x);
                return;
            }
            if n.left == NIL || !pred(n.min) {
                return;
            }
            if pred(self.nodes[n.left as usize].max) {
                out.push(n.left);
                x = n.right;
            } else {
                x = n.left;
            }
        }
    }

    /// Canonical nodes of the items `i` with `above(i) && below(i)`, where
    /// `above` is false then true and `below` true then false.
    pub fn canonical_nodes(
        &self,
        root: u32,
        above: &impl Fn(u32) -> bool,
        below: &impl Fn(u32) -> bool,
        out: &mut Vec<u32>,
    ) {
        if root == NIL {
            return;
        }
        let n = &self.nodes[root as usize];
        if !above(n.max) || !below(n.min) {
            return;
        }
        if above(n.min) && below(n.max) {
            out.push(root);
            return;
        }
        if n.left != NIL {
            self.canonical_nodes(n.left, above, below, out);
            self.canonical_nodes(n.right, above, below, out);
        }
    }

    /// Verifies structure, summaries, ordering and balance.
    pub fn check_invariants(&self, root: u32, cmp: impl Fn(u32, u32) -> Ordering) -> Result<(), String> {
        if root == NIL {
            return Ok(());
        }
        if self.nodes[root as usize].parent != NIL {
            return Err(format!("root {root} has a parent"));
        }
        let mut stack = vec![root];
        while let Some(x) = stack.pop() {
            let n = self.nodes[x as usize];
            if n.size == 0 {
                return Err(format!("node {x} is free but reachable"));
            }
            if n.left == NIL {
                if n.right != NIL || n.size != 1 || n.min != n.max {
                    return Err(format!("leaf {x} malformed"));
                }
                continue;
            }
            let (l, r) = (self.nodes[n.left as usize], self.nodes[n.right as usize]);
            if l.parent != x || r.parent != x {
                return Err(format!("parent link broken under {x}"));
            }
            if n.size != l.size + r.size || n.min != l.min || n.max != r.max {
                return Err(format!("summary of {x} inconsistent"));
            }
            if cmp(l.max, r.min) != Ordering::Less {
                return Err(format!("order violated under {x}"));
            }
            if !self.is_balanced(x) {
                return Err(format!("node {x} unbalanced: {} vs {}", l.size, n.size));
            }
            stack.push(n.left);
            stack.push(n.right);
        }
        Ok(())
    }
}
