//! Link census for dominance range trees over red and blue point sets.
//!
//! Both sets get a static `d`-layer range tree, perfectly balanced, with
//! children split at the middle of the sorted range. A red node `u` and a
//! blue node `v` are linked when `v` is a canonical node of the region
//! dominating the box of `u` and `u` is a canonical node of the region
//! dominated by the box of `v`. Nodes of the last layer are tuples
//! `(u_1, .., u_d)`; the box of `u` uses the extremes of `P(u_k)` in
//! coordinate `k`.
//!
//! Coordinates are perturbed by point index, so every axis is a strict order.

use std::cmp::Ordering;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const CSV_HEADER: &str = "d,n,m,dist,seed,alpha,links,max_links_per_node,ratio";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Distribution {
    Uniform,
    /// Lattice points with many shared coordinates.
    Grid,
    /// Everything on the main diagonal, red and blue interleaved, so every
    /// blue point dominates every red point below it.
    AdversarialDiagonal,
}

impl Distribution {
    pub fn name(self) -> &'static str {
        match self {
            Distribution::Uniform => "uniform",
            Distribution::Grid => "grid",
            Distribution::AdversarialDiagonal => "adversarial-diagonal",
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Distribution {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "uniform" => Ok(Distribution::Uniform),
            "grid" => Ok(Distribution::Grid),
            "adversarial-diagonal" | "diagonal" => Ok(Distribution::AdversarialDiagonal),
            _ => Err(format!("unknown distribution `{s}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensusConfig {
    pub d: usize,
    /// Red points.
    pub n: usize,
    /// Blue points.
    pub m: usize,
    pub dist: Distribution,
    pub seed: u64,
    /// Echoed only: the static trees are perfectly balanced.
    pub alpha: f64,
}

impl CensusConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(1..=3).contains(&self.d) {
            return Err(format!("dimension {} outside 1..=3", self.d));
        }
        if self.m == 0 || self.n < self.m {
            return Err(format!("need n >= m >= 1, got n = {}, m = {}", self.n, self.m));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensusRow {
    pub config: CensusConfig,
    pub links: u64,
    /// Over red and blue last-layer nodes.
    pub max_links_per_node: u64,
    pub ratio: f64,
}

impl CensusRow {
    pub fn csv_line(&self) -> String {
        let c = &self.config;
        format!(
            "{},{},{},{},{},{},{},{},{:.6}",
            c.d, c.n, c.m, c.dist, c.seed, c.alpha, self.links, self.max_links_per_node, self.ratio
        )
    }
}

/// `links / (n + m)` in one dimension, otherwise
/// `links / (n (log n · log log n)^(d-1))` with both logarithms floored at 1.
pub fn normalized_ratio(d: usize, n: usize, m: usize, links: u64) -> f64 {
    if d == 1 {
        return links as f64 / (n + m) as f64;
    }
    let l = (n as f64).log2().max(1.0);
    let ll = l.log2().max(1.0);
    links as f64 / (n as f64 * (l * ll).powi(d as i32 - 1))
}

/// Red and blue points; red indices come first.
#[derive(Clone, Debug)]
pub struct PointSets {
    pub d: usize,
    pub coords: Vec<[i64; 3]>,
    pub n: usize,
}

impl PointSets {
    pub fn new(d: usize, red: &[[i64; 3]], blue: &[[i64; 3]]) -> Self {
        let mut coords = red.to_vec();
        coords.extend_from_slice(blue);
        PointSets { d, coords, n: red.len() }
    }

    pub fn generate(cfg: &CensusConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (cfg.n as u64).rotate_left(32) ^ cfg.m as u64);
        let total = cfg.n + cfg.m;
        let coords: Vec<[i64; 3]> = match cfg.dist {
            Distribution::Uniform => (0..total)
                .map(|_| [0; 3].map(|_| rng.random_range(0..1i64 << 30)))
                .collect(),
            Distribution::Grid => {
                let side = ((total as f64).powf(1.0 / cfg.d as f64).ceil() as i64).max(1);
                (0..total).map(|_| [0; 3].map(|_| rng.random_range(0..side))).collect()
            }
            Distribution::AdversarialDiagonal => {
                // red k at 2k, blue k at 2k + 1, then shuffled so ids carry no order
                let mut c: Vec<[i64; 3]> = (0..cfg.n)
                    .map(|k| [2 * k as i64; 3])
                    .chain((0..cfg.m).map(|k| [2 * k as i64 + 1; 3]))
                    .collect();
                c[..cfg.n].shuffle(&mut rng);
                c[cfg.n..].shuffle(&mut rng);
                c
            }
        };
        PointSets { d: cfg.d, coords, n: cfg.n }
    }

    pub fn red(&self) -> impl Iterator<Item = u32> {
        0..self.n as u32
    }

    pub fn blue(&self) -> impl Iterator<Item = u32> {
        self.n as u32..self.coords.len() as u32
    }

    /// Does `b` dominate `r` in every coordinate (perturbed)?
    pub fn dominates(&self, b: u32, r: u32) -> bool {
        (0..self.d).all(|k| self.cmp(k, b, r, false) == Ordering::Greater)
    }

    #[inline]
    fn cmp(&self, k: usize, a: u32, b: u32, rev: bool) -> Ordering {
        let o = self.coords[a as usize][k]
            .cmp(&self.coords[b as usize][k])
            .then(a.cmp(&b));
        if rev {
            o.reverse()
        } else {
            o
        }
    }
}

/// One layer of a static range tree: points sorted by the layer's coordinate.
/// Node ids are preorder positions; a range of `L` points has `2L - 1` nodes.
struct Layer {
    pts: Vec<u32>,
    assoc: Vec<Layer>,
}

#[derive(Clone, Copy)]
struct Node {
    lo: usize,
    hi: usize,
    id: usize,
}

impl Node {
    fn root(len: usize) -> Self {
        Node { lo: 0, hi: len, id: 0 }
    }

    fn is_leaf(self) -> bool {
        self.hi - self.lo == 1
    }

    /// Splits at the middle, rounding down, or up when `rev` so that a
    /// reversed array gets the mirror image of the tree.
    fn children(self, rev: bool) -> (Node, Node) {
        let mid = (self.lo + self.hi + rev as usize) / 2;
        (
            Node { lo: self.lo, hi: mid, id: self.id + 1 },
            Node { lo: mid, hi: self.hi, id: self.id + 2 * (mid - self.lo) },
        )
    }
}

/// Calls `f(node, parent)` for every node in preorder.
fn for_each_node(len: usize, rev: bool, mut f: impl FnMut(Node, Option<Node>)) {
    if len == 0 {
        return;
    }
    let mut stack = vec![(Node::root(len), None)];
    while let Some((x, p)) = stack.pop() {
        f(x, p);
        if !x.is_leaf() {
            let (l, r) = x.children(rev);
            stack.push((r, Some(x)));
            stack.push((l, Some(x)));
        }
    }
}

struct Builder<'a> {
    sets: &'a PointSets,
    rev: bool,
}

impl Builder<'_> {
    fn build(&self, mut pts: Vec<u32>, k: usize) -> Layer {
        pts.sort_unstable_by(|&a, &b| self.sets.cmp(k, a, b, self.rev));
        let mut assoc = Vec::new();
        if k + 1 < self.sets.d {
            assoc.reserve(2 * pts.len());
            for_each_node(pts.len(), self.rev, |x, _| assoc.push(self.build(pts[x.lo..x.hi].to_vec(), k + 1)));
        }
        Layer { pts, assoc }
    }
}

/// Counts links with red in the dominated role; `rev` flips every order,
/// which exchanges the roles of the two colours.
struct Counter<'a> {
    sets: &'a PointSets,
    rev: bool,
}

impl Counter<'_> {
    #[inline]
    fn greater(&self, k: usize, a: u32, b: u32) -> bool {
        self.sets.cmp(k, a, b, self.rev) == Ordering::Greater
    }

    /// Blue nodes of `b` linked with red node `u` of `a` in coordinate `k`.
    fn linked(&self, k: usize, a: &Layer, u: Node, parent: Option<Node>, b: &Layer, out: &mut Vec<Node>) {
        if b.pts.is_empty() {
            return;
        }
        let q = a.pts[u.hi - 1];
        let pmax = parent.map(|p| a.pts[p.hi - 1]);
        let mut stack = vec![Node::root(b.pts.len())];
        while let Some(v) = stack.pop() {
            if self.greater(k, b.pts[v.lo], q) {
                // v is canonical for the dominating region; test the way back
                if pmax.is_none_or(|pm| self.greater(k, pm, b.pts[v.lo])) {
                    out.push(v);
                }
            } else if self.greater(k, b.pts[v.hi - 1], q) {
                let (l, r) = v.children(self.rev);
                stack.push(r);
                stack.push(l);
            }
        }
    }

    /// Returns (links, max links of one red last-layer node) for red layer
    /// `a` against the blue layers `bs`, all in coordinate `k`.
    fn visit(&self, k: usize, a: &Layer, bs: &[&Layer]) -> (u64, u64) {
        let last = k + 1 == self.sets.d;
        let (mut total, mut max) = (0u64, 0u64);
        let mut vs = Vec::new();
        for_each_node(a.pts.len(), self.rev, |u, p| {
            if last {
                let mut c = 0;
                for b in bs {
                    vs.clear();
                    self.linked(k, a, u, p, b, &mut vs);
                    c += vs.len() as u64;
                }
                total += c;
                max = max.max(c);
            } else {
                let mut next: Vec<&Layer> = Vec::new();
                for b in bs {
                    vs.clear();
                    self.linked(k, a, u, p, b, &mut vs);
                    next.extend(vs.iter().map(|v| &b.assoc[v.id]));
                }
                if !next.is_empty() {
                    let (t, m) = self.visit(k + 1, &a.assoc[u.id], &next);
                    total += t;
                    max = max.max(m);
                }
            }
        });
        (total, max)
    }
}

fn one_side(sets: &PointSets, rev: bool) -> (u64, u64) {
    let builder = Builder { sets, rev };
    let (lower, upper): (Vec<u32>, Vec<u32>) = if rev {
        (sets.blue().collect(), sets.red().collect())
    } else {
        (sets.red().collect(), sets.blue().collect())
    };
    let a = builder.build(lower, 0);
    let b = builder.build(upper, 0);
    Counter { sets, rev }.visit(0, &a, &[&b])
}

/// Number of links and the largest number of links at one node.
pub fn count_links(sets: &PointSets) -> (u64, u64) {
    let (links, red_max) = one_side(sets, false);
    let (again, blue_max) = one_side(sets, true);
    debug_assert_eq!(links, again, "link count depends on the side it is taken from");
    (links, red_max.max(blue_max))
}

pub fn run(cfg: &CensusConfig) -> Result<CensusRow, String> {
    cfg.validate()?;
    let sets = PointSets::generate(cfg);
    let (links, max) = count_links(&sets);
    Ok(CensusRow {
        config: cfg.clone(),
        links,
        max_links_per_node: max,
        ratio: normalized_ratio(cfg.d, cfg.n, cfg.m, links),
    })
}

/// Sizes `nmin, 2 nmin, ..` up to `nmax`, with `m = n`.
pub fn sweep(d: usize, nmin: usize, nmax: usize, dist: Distribution, seed: u64, alpha: f64) -> Vec<CensusConfig> {
    let mut out = Vec::new();
    let mut n = nmin.max(1);
    while n <= nmax {
        out.push(CensusConfig { d, n, m: n, dist, seed, alpha });
        n *= 2;
    }
    out
}

/// Runs every configuration and writes the CSV table.
pub fn census<W: Write>(configs: &[CensusConfig], out: &mut W) -> io::Result<Vec<CensusRow>> {
    writeln!(out, "{CSV_HEADER}")?;
    let mut rows = Vec::with_capacity(configs.len());
    for cfg in configs {
        let row = run(cfg).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
        writeln!(out, "{}", row.csv_line())?;
        rows.push(row);
    }
    Ok(rows)
}

/// A last-layer node given by its preorder id in each layer, with its points.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct TupleNode {
    pub path: Vec<usize>,
    pub points: Vec<u32>,
}

struct Tuple {
    path: Vec<usize>,
    /// Per coordinate: (min point, max point) of the layer node.
    ext: Vec<(u32, u32)>,
    points: Vec<u32>,
}

fn tuples(layer: &Layer, k: usize, d: usize, prefix: &mut Vec<usize>, ext: &mut Vec<(u32, u32)>, out: &mut Vec<Tuple>) {
    let mut nodes = Vec::new();
    for_each_node(layer.pts.len(), false, |x, _| nodes.push(x));
    for x in nodes {
        prefix.push(x.id);
        ext.push((layer.pts[x.lo], layer.pts[x.hi - 1]));
        if k + 1 == d {
            out.push(Tuple {
                path: prefix.clone(),
                ext: ext.clone(),
                points: layer.pts[x.lo..x.hi].to_vec(),
            });
        } else {
            tuples(&layer.assoc[x.id], k + 1, d, prefix, ext, out);
        }
        prefix.pop();
        ext.pop();
    }
}

/// Canonical decomposition of `{p : p_k > q_k for all k}` (or `<` when
/// `below`), as id paths.
fn decompose(sets: &PointSets, layer: &Layer, k: usize, q: &[u32], below: bool, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    let inside = |p: u32| sets.cmp(k, p, q[k], false) == if below { Ordering::Less } else { Ordering::Greater };
    let mut nodes = Vec::new();
    for_each_node(layer.pts.len(), false, |x, parent| {
        let all = layer.pts[x.lo..x.hi].iter().all(|&p| inside(p));
        let parent_all = parent.is_some_and(|p| layer.pts[p.lo..p.hi].iter().all(|&p| inside(p)));
        if all && !parent_all {
            nodes.push(x);
        }
    });
    for x in nodes {
        prefix.push(x.id);
        if k + 1 == sets.d {
            out.push(prefix.clone());
        } else {
            decompose(sets, &layer.assoc[x.id], k + 1, q, below, prefix, out);
        }
        prefix.pop();
    }
}

/// Every link, found by computing both canonical decompositions explicitly
/// for every node. Quadratic in the number of nodes; for tests.
pub fn links_brute(sets: &PointSets) -> Vec<(TupleNode, TupleNode)> {
    let builder = Builder { sets, rev: false };
    let a = builder.build(sets.red().collect(), 0);
    let b = builder.build(sets.blue().collect(), 0);
    let (mut ra, mut rb) = (Vec::new(), Vec::new());
    tuples(&a, 0, sets.d, &mut Vec::new(), &mut Vec::new(), &mut ra);
    tuples(&b, 0, sets.d, &mut Vec::new(), &mut Vec::new(), &mut rb);
    let mut out = Vec::new();
    for u in &ra {
        let q: Vec<u32> = u.ext.iter().map(|e| e.1).collect();
        let mut up = Vec::new();
        decompose(sets, &b, 0, &q, false, &mut Vec::new(), &mut up);
        for v in rb.iter().filter(|v| up.contains(&v.path)) {
            let p: Vec<u32> = v.ext.iter().map(|e| e.0).collect();
            let mut down = Vec::new();
            decompose(sets, &a, 0, &p, true, &mut Vec::new(), &mut down);
            if down.contains(&u.path) {
                out.push((
                    TupleNode { path: u.path.clone(), points: u.points.clone() },
                    TupleNode { path: v.path.clone(), points: v.points.clone() },
                ));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_counts(sets: &PointSets) -> (u64, u64) {
        let links = links_brute(sets);
        let mut per: std::collections::BTreeMap<(bool, Vec<usize>), u64> = Default::default();
        for (u, v) in &links {
            *per.entry((false, u.path.clone())).or_default() += 1;
            *per.entry((true, v.path.clone())).or_default() += 1;
        }
        (links.len() as u64, per.values().copied().max().unwrap_or(0))
    }

    #[test]
    fn two_singletons_link_at_the_roots() {
        let sets = PointSets::new(1, &[[1, 0, 0]], &[[2, 0, 0]]);
        assert_eq!(count_links(&sets), (1, 1));
        assert_eq!(brute_counts(&sets), (1, 1));
    }

    #[test]
    fn blue_entirely_below_red_has_no_links() {
        let red: Vec<[i64; 3]> = (10..20).map(|x| [x, 0, 0]).collect();
        let blue: Vec<[i64; 3]> = (0..5).map(|x| [x, 0, 0]).collect();
        let sets = PointSets::new(1, &red, &blue);
        assert_eq!(count_links(&sets).0, 0);
    }

    #[test]
    fn fast_count_matches_brute_force() {
        for d in 1..=3 {
            for dist in [Distribution::Uniform, Distribution::Grid, Distribution::AdversarialDiagonal] {
                for seed in 0..6 {
                    let n = [1, 3, 8, 17, 40, 64][seed as usize];
                    let m = (n / 2).max(1);
                    let cfg = CensusConfig { d, n, m, dist, seed, alpha: 0.25 };
                    let sets = PointSets::generate(&cfg);
                    assert_eq!(count_links(&sets), brute_counts(&sets), "{cfg:?}");
                }
            }
        }
    }

    #[test]
    fn every_dominating_pair_is_witnessed_by_a_link() {
        for d in 1..=3 {
            for seed in 0..4 {
                let cfg = CensusConfig { d, n: 32, m: 32, dist: Distribution::Uniform, seed, alpha: 0.25 };
                let sets = PointSets::generate(&cfg);
                let links = links_brute(&sets);
                for r in sets.red() {
                    for b in sets.blue().filter(|&b| sets.dominates(b, r)) {
                        assert!(
                            links.iter().any(|(u, v)| u.points.contains(&r) && v.points.contains(&b)),
                            "d={d} seed={seed}: pair ({r}, {b}) has no link"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn csv_is_reproducible() {
        let cfgs = sweep(2, 16, 128, Distribution::Uniform, 9, 0.25);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        census(&cfgs, &mut a).unwrap();
        census(&cfgs, &mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert_eq!(text.lines().next(), Some(CSV_HEADER));
        assert_eq!(text.lines().count(), 1 + 4);
    }

    #[test]
    fn config_checks() {
        let ok = CensusConfig { d: 2, n: 4, m: 4, dist: Distribution::Grid, seed: 0, alpha: 0.25 };
        assert!(ok.validate().is_ok());
        assert!(CensusConfig { d: 4, ..ok.clone() }.validate().is_err());
        assert!(CensusConfig { m: 5, ..ok.clone() }.validate().is_err());
        assert!(CensusConfig { m: 0, ..ok }.validate().is_err());
    }
}
