//! Reflected and swapped coordinate frames, with symbolically perturbed keys.
//!
//! A point's perturbed x-coordinate is `x + ε·id` and its y-coordinate is
//! `y + ε²·id` for infinitesimal `ε`. Keys carry the coefficients explicitly,
//! so signed permutations of the axes keep every comparison exact and every
//! key distinct.

use std::cmp::Ordering;

use crate::geometry::WeightedPoint;
use crate::scalar::Scalar;

/// `value + e1·ε + e2·ε²`, compared lexicographically.
#[derive(Clone, Debug, PartialEq)]
pub struct PKey<S> {
    pub v: S,
    pub e1: i64,
    pub e2: i64,
}

impl<S: Scalar> PKey<S> {
    #[inline]
    pub fn cmp(&self, other: &Self) -> Ordering {
        self.v
            .cmp_exact(&other.v)
            .then(self.e1.cmp(&other.e1))
            .then(self.e2.cmp(&other.e2))
    }

    fn scaled(&self, s: i8) -> Self {
        if s > 0 {
            self.clone()
        } else {
            PKey {
                v: self.v.neg(),
                e1: -self.e1,
                e2: -self.e2,
            }
        }
    }

    fn minus(&self, other: &Self) -> Self {
        PKey {
            v: self.v.sub(&other.v),
            e1: self.e1 - other.e1,
            e2: self.e2 - other.e2,
        }
    }
}

/// Signed axis permutation applied before a point enters a structure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct QuadrantTransform {
    pub sx: i8,
    pub sy: i8,
    /// Exchange the (signed) axes after reflecting. Turns the top-edge
    /// contact case into the right-edge one.
    pub swap: bool,
}

impl QuadrantTransform {
    pub const IDENTITY: QuadrantTransform = QuadrantTransform {
        sx: 1,
        sy: 1,
        swap: false,
    };

    /// All eight signed permutations.
    pub fn all8() -> Vec<QuadrantTransform> {
        let mut v = Vec::new();
        for sx in [1, -1] {
            for sy in [1, -1] {
                for swap in [false, true] {
                    v.push(QuadrantTransform { sx, sy, swap });
                }
            }
        }
        v
    }

    /// Identity and x-reflection, each with and without the swap.
    pub fn all4() -> Vec<QuadrantTransform> {
        let mut v = Vec::new();
        for sx in [1, -1] {
            for swap in [false, true] {
                v.push(QuadrantTransform { sx, sy: 1, swap });
            }
        }
        v
    }

    /// Perturbed (X, Y, X − Y) keys of `p` in this frame.
    pub fn keys<S: Scalar>(&self, p: &WeightedPoint<S>) -> (PKey<S>, PKey<S>, PKey<S>) {
        let id = p.id.0 as i64;
        let xt = PKey { v: p.x.clone(), e1: id, e2: 0 }.scaled(self.sx);
        let yt = PKey { v: p.y.clone(), e1: 0, e2: id }.scaled(self.sy);
        let (kx, ky) = if self.swap { (yt, xt) } else { (xt, yt) };
        let kg = kx.minus(&ky);
        (kx, ky, kg)
    }

    /// Maps a plain coordinate pair (used for the unperturbed value only).
    pub fn apply<S: Scalar>(&self, x: &S, y: &S) -> (S, S) {
        let a = if self.sx > 0 { x.clone() } else { x.neg() };
        let b = if self.sy > 0 { y.clone() } else { y.neg() };
        if self.swap {
            (b, a)
        } else {
            (a, b)
        }
    }

    pub fn inverse_apply<S: Scalar>(&self, x: &S, y: &S) -> (S, S) {
        let (a, b) = if self.swap { (y.clone(), x.clone()) } else { (x.clone(), y.clone()) };
        let a = if self.sx > 0 { a } else { a.neg() };
        let b = if self.sy > 0 { b } else { b.neg() };
        (a, b)
    }
}

/// Per-slot data of the points stored in one frame.
#[derive(Clone, Debug, Default)]
pub struct FramePoints<S> {
    pub kx: Vec<PKey<S>>,
    pub ky: Vec<PKey<S>>,
    pub kg: Vec<PKey<S>>,
    /// Half the weight: slope of the upper-right corner.
    pub hw: Vec<S>,
    /// Negated half weight: slope of the lower-left corner.
    pub nhw: Vec<S>,
    pub id: Vec<u64>,
}

impl<S: Scalar> FramePoints<S> {
    pub fn new() -> Self {
        FramePoints {
            kx: Vec::new(),
            ky: Vec::new(),
            kg: Vec::new(),
            hw: Vec::new(),
            nhw: Vec::new(),
            id: Vec::new(),
        }
    }

    /// Stores `p` at `slot`.
    pub fn set(&mut self, slot: u32, p: &WeightedPoint<S>, frame: &QuadrantTransform) {
        let s = slot as usize;
        let (kx, ky, kg) = frame.keys(p);
        let hw = p.w.half();
        let nhw = hw.neg();
        if s >= self.kx.len() {
            // unused slots below `s` hold copies until they are set
            self.kx.resize(s + 1, kx.clone());
            self.ky.resize(s + 1, ky.clone());
            self.kg.resize(s + 1, kg.clone());
            self.hw.resize(s + 1, hw.clone());
            self.nhw.resize(s + 1, nhw.clone());
            self.id.resize(s + 1, p.id.0);
        }
        self.kx[s] = kx;
        self.ky[s] = ky;
        self.kg[s] = kg;
        self.hw[s] = hw;
        self.nhw[s] = nhw;
        self.id[s] = p.id.0;
    }

    #[inline]
    pub fn cmp_x(&self, a: u32, b: u32) -> Ordering {
        self.kx[a as usize].cmp(&self.kx[b as usize])
    }

    #[inline]
    pub fn cmp_y(&self, a: u32, b: u32) -> Ordering {
        self.ky[a as usize].cmp(&self.ky[b as usize])
    }

    #[inline]
    pub fn cmp_g(&self, a: u32, b: u32) -> Ordering {
        self.kg[a as usize].cmp(&self.kg[b as usize])
    }

    /// `(a, b)` of the frame-x trajectory of the lower-left corner.
    #[inline]
    pub fn lower(&self, s: u32) -> (&S, &S) {
        (&self.kx[s as usize].v, &self.nhw[s as usize])
    }

    /// `(a, b)` of the frame-x trajectory of the upper-right corner.
    #[inline]
    pub fn upper(&self, s: u32) -> (&S, &S) {
        (&self.kx[s as usize].v, &self.hw[s as usize])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{dominates, gamma_key};
    use crate::scalar::Rational;
    use proptest::prelude::*;

    fn pt(id: u64, x: i64, y: i64) -> WeightedPoint<Rational> {
        WeightedPoint::new(id, Rational::from_int(x), Rational::from_int(y), Rational::from_int(1))
    }

    #[test]
    fn identity_keys_follow_perturbed_order() {
        let f = QuadrantTransform::IDENTITY;
        let (ax, ay, ag) = f.keys(&pt(1, 3, 3));
        let (bx, by, bg) = f.keys(&pt(2, 3, 3));
        assert_eq!(ax.cmp(&bx), Ordering::Less);
        assert_eq!(ay.cmp(&by), Ordering::Less);
        // equal x - y: larger id has the larger x perturbation, which dominates
        assert_eq!(ag.cmp(&bg), Ordering::Less);
    }

    #[test]
    fn apply_round_trips() {
        for f in QuadrantTransform::all8() {
            let (x, y) = (Rational::from_int(3), Rational::from_int(-7));
            let (a, b) = f.apply(&x, &y);
            assert_eq!(f.inverse_apply(&a, &b), (x.clone(), y.clone()));
        }
    }

    proptest! {
        #[test]
        fn identity_frame_agrees_with_geometry(ax in -5i64..5, ay in -5i64..5, bx in -5i64..5, by in -5i64..5) {
            let (p, q) = (pt(1, ax, ay), pt(2, bx, by));
            let f = QuadrantTransform::IDENTITY;
            let (px, py, pg) = f.keys(&p);
            let (qx, qy, qg) = f.keys(&q);
            let dom = px.cmp(&qx) != Ordering::Less && py.cmp(&qy) != Ordering::Less;
            prop_assert_eq!(dom, dominates(&p, &q));
            prop_assert_eq!(pg.cmp(&qg) == Ordering::Less, gamma_key(&p).value < gamma_key(&q).value
                || (gamma_key(&p).value == gamma_key(&q).value && pg.e1 < qg.e1));
        }

        #[test]
        fn every_pair_is_comparable_in_identity_or_reflection(ax in -3i64..3, ay in -3i64..3, bx in -3i64..3, by in -3i64..3) {
            let (p, q) = (pt(1, ax, ay), pt(2, bx, by));
            let mut hits = 0;
            for f in QuadrantTransform::all4().into_iter().filter(|f| !f.swap) {
                let (px, py, _) = f.keys(&p);
                let (qx, qy, _) = f.keys(&q);
                let ge = |a: &PKey<Rational>, b: &PKey<Rational>| a.cmp(b) != Ordering::Less;
                if (ge(&px, &qx) && ge(&py, &qy)) || (ge(&qx, &px) && ge(&qy, &py)) {
                    hits += 1;
                }
            }
            prop_assert_eq!(hits, 1);
        }
    }
}
