//! Number types used for coordinates, weights and times.
//!
//! Two arithmetic modes share one trait. [`Rational`] is exact: every value is a
//! reduced big rational, paired with a cached `f64` approximation that lets most
//! comparisons skip the big-integer path. `f64` is the fast mode; comparisons
//! that decide kinetic events take a tolerance.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

/// Relative error bound for the cached approximation of a [`Rational`]
/// (conversion is correctly rounded; this leaves generous slack).
const APPROX_REL_ERR: f64 = 1.0 / (1u64 << 50) as f64;

pub trait Scalar: Clone + fmt::Debug + PartialEq + Send + Sync + 'static {
    /// `true` for the exact rational mode.
    const EXACT: bool;

    fn from_int(v: i64) -> Self;
    /// Parses a decimal (`-12.5`, `3e2`) or, in exact mode, a fraction `p/q`.
    fn parse(s: &str) -> Option<Self>;

    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    /// Panics on division by zero.
    fn div(&self, other: &Self) -> Self;
    fn neg(&self) -> Self;

    fn half(&self) -> Self {
        self.div(&Self::from_int(2))
    }

    fn abs(&self) -> Self {
        if self.signum() == Ordering::Less {
            self.neg()
        } else {
            self.clone()
        }
    }

    fn max_of(&self, other: &Self) -> Self {
        if self.cmp_exact(other) == Ordering::Less {
            other.clone()
        } else {
            self.clone()
        }
    }

    /// Total order with no tolerance.
    fn cmp_exact(&self, other: &Self) -> Ordering;

    /// Order used by kinetic decisions. Float mode treats values within
    /// `eps` (relative, with an absolute floor of `eps`) as equal.
    fn cmp_tol(&self, other: &Self, eps: f64) -> Ordering;

    /// Sign of `(a1 + b1*t) - (a2 + b2*t)`.
    fn lin_cmp(a1: &Self, b1: &Self, a2: &Self, b2: &Self, t: &Self, eps: f64) -> Ordering;

    fn signum(&self) -> Ordering {
        self.cmp_exact(&Self::from_int(0))
    }

    fn is_zero(&self) -> bool {
        self.signum() == Ordering::Equal
    }

    fn to_f64(&self) -> f64;

    /// Serialisation form: `"p/q"` in exact mode, a plain decimal otherwise.
    fn render(&self) -> String;

    /// JSON value for serialisation (string in exact mode, number in float mode).
    fn to_json(&self) -> serde_json::Value;
}

/// Exact rational with a cached floating-point approximation.
///
/// Values whose reduced numerator and denominator fit in `i128` are kept in
/// machine integers; arithmetic falls back to big integers on overflow.
#[derive(Clone)]
pub struct Rational {
    r: Repr,
    approx: f64,
}

#[derive(Clone)]
enum Repr {
    /// Reduced, denominator positive.
    Small(i128, i128),
    Big(BigRational),
}

fn small(n: i128, d: i128) -> Option<(i128, i128)> {
    if d == 1 {
        return Some((n, 1));
    }
    if d == 0 {
        return None;
    }
    let g = n.gcd(&d);
    let (mut n, mut d) = if g == 1 { (n, d) } else { (n / g, d / g) };
    if d < 0 {
        n = n.checked_neg()?;
        d = d.checked_neg()?;
    }
    Some((n, d))
}

#[inline]
fn small_approx(n: i128, d: i128) -> f64 {
    const LIM: i128 = 1 << 53;
    if d == 1 && n.abs() < LIM {
        return n as i64 as f64;
    }
    if n.abs() < LIM && d < LIM {
        return n as i64 as f64 / d as i64 as f64;
    }
    n as f64 / d as f64
}

impl Rational {
    pub fn new(q: BigRational) -> Self {
        if let (Some(n), Some(d)) = (q.numer().to_i128(), q.denom().to_i128()) {
            return Self::from_small(n, d);
        }
        let approx = q.to_f64().unwrap_or(f64::NAN);
        Rational { r: Repr::Big(q), approx }
    }

    /// `n / d` with `n / d` already reduced and `d > 0`.
    fn from_small(n: i128, d: i128) -> Self {
        Rational {
            r: Repr::Small(n, d),
            approx: small_approx(n, d),
        }
    }

    fn from_parts(n: i128, d: i128) -> Option<Self> {
        small(n, d).map(|(n, d)| Self::from_small(n, d))
    }

    pub fn from_frac(num: i64, den: i64) -> Self {
        Self::from_parts(num as i128, den as i128).expect("zero denominator")
    }

    pub fn to_big(&self) -> BigRational {
        match &self.r {
            Repr::Small(n, d) => BigRational::new_raw(BigInt::from(*n), BigInt::from(*d)),
            Repr::Big(q) => q.clone(),
        }
    }

    pub fn approx(&self) -> f64 {
        self.approx
    }

    fn parts(&self) -> Option<(i128, i128)> {
        match self.r {
            Repr::Small(n, d) => Some((n, d)),
            Repr::Big(_) => None,
        }
    }

    fn small_add(a: (i128, i128), b: (i128, i128)) -> Option<Self> {
        if a.1 == b.1 {
            return Self::from_parts(a.0.checked_add(b.0)?, a.1);
        }
        let n = a.0.checked_mul(b.1)?.checked_add(b.0.checked_mul(a.1)?)?;
        Self::from_parts(n, a.1.checked_mul(b.1)?)
    }

    fn small_mul(a: (i128, i128), b: (i128, i128)) -> Option<Self> {
        if a.1 == 1 && b.1 == 1 {
            return Some(Self::from_small(a.0.checked_mul(b.0)?, 1));
        }
        // cross-reduce first to keep the products small
        let g1 = a.0.gcd(&b.1).max(1);
        let g2 = b.0.gcd(&a.1).max(1);
        let n = (a.0 / g1).checked_mul(b.0 / g2)?;
        let d = (a.1 / g2).checked_mul(b.1 / g1)?;
        Some(Self::from_small(n, d))
    }

    fn small_cmp(a: (i128, i128), b: (i128, i128)) -> Option<Ordering> {
        if a.1 == b.1 {
            return Some(a.0.cmp(&b.0));
        }
        Some(a.0.checked_mul(b.1)?.cmp(&b.0.checked_mul(a.1)?))
    }

    fn exact_sign_of_lin(a1: &Self, b1: &Self, a2: &Self, b2: &Self, t: &Self) -> Ordering {
        let v = a1.sub(a2).add(&b1.sub(b2).mul(t));
        v.signum()
    }
}

impl PartialEq for Rational {
    fn eq(&self, other: &Self) -> bool {
        match (&self.r, &other.r) {
            (Repr::Small(a, b), Repr::Small(c, d)) => a == c && b == d,
            (Repr::Big(p), Repr::Big(q)) => p == q,
            _ => false,
        }
    }
}

impl Eq for Rational {}

impl PartialOrd for Rational {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rational {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cmp_exact(other)
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.render())
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.render())
    }
}

fn parse_decimal_exact(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match digits.find('.') {
        Some(i) => (&digits[..i], &digits[i + 1..]),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let all: String = format!("{int_part}{frac_part}");
    let mut num = BigInt::from_str(if all.is_empty() { "0" } else { &all }).ok()?;
    if neg {
        num = -num;
    }
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let q = if scale >= 0 {
        BigRational::from_integer(num * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(num, num_traits::pow(ten, (-scale) as usize))
    };
    Some(q)
}

impl Scalar for Rational {
    const EXACT: bool = true;

    fn from_int(v: i64) -> Self {
        Self::from_small(v as i128, 1)
    }

    fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n = BigInt::from_str(n.trim()).ok()?;
            let d = BigInt::from_str(d.trim()).ok()?;
            if d.is_zero() {
                return None;
            }
            return Some(Self::new(BigRational::new(n, d)));
        }
        parse_decimal_exact(s).map(Self::new)
    }

    fn add(&self, other: &Self) -> Self {
        if let (Some(a), Some(b)) = (self.parts(), other.parts()) {
            if let Some(v) = Self::small_add(a, b) {
                return v;
            }
        }
        Self::new(self.to_big() + other.to_big())
    }

    fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    fn mul(&self, other: &Self) -> Self {
        if let (Some(a), Some(b)) = (self.parts(), other.parts()) {
            if let Some(v) = Self::small_mul(a, b) {
                return v;
            }
        }
        Self::new(self.to_big() * other.to_big())
    }

    fn div(&self, other: &Self) -> Self {
        assert!(!other.is_zero(), "division by zero");
        if let (Some(a), Some((n, d))) = (self.parts(), other.parts()) {
            if let Some(inv) = small(d, n) {
                if let Some(v) = Self::small_mul(a, inv) {
                    return v;
                }
            }
        }
        Self::new(self.to_big() / other.to_big())
    }

    fn neg(&self) -> Self {
        match &self.r {
            Repr::Small(n, d) => match n.checked_neg() {
                Some(m) => Self::from_small(m, *d),
                None => Self::new(-self.to_big()),
            },
            Repr::Big(q) => Self::new(-q.clone()),
        }
    }

    fn half(&self) -> Self {
        self.div(&Self::from_int(2))
    }

    #[inline]
    fn cmp_exact(&self, other: &Self) -> Ordering {
        if let (Repr::Small(a, b), Repr::Small(c, d)) = (&self.r, &other.r) {
            if b == d {
                return a.cmp(c);
            }
        }
        let (a, b) = (self.approx, other.approx);
        if a.is_finite() && b.is_finite() {
            let bound = APPROX_REL_ERR * (a.abs() + b.abs());
            if a - b > bound {
                return Ordering::Greater;
            }
            if b - a > bound {
                return Ordering::Less;
            }
        }
        if let (Some(x), Some(y)) = (self.parts(), other.parts()) {
            if let Some(o) = Self::small_cmp(x, y) {
                return o;
            }
        }
        self.to_big().cmp(&other.to_big())
    }

    fn cmp_tol(&self, other: &Self, _eps: f64) -> Ordering {
        self.cmp_exact(other)
    }

    fn lin_cmp(a1: &Self, b1: &Self, a2: &Self, b2: &Self, t: &Self, _eps: f64) -> Ordering {
        let tf = t.approx;
        let p1 = b1.approx * tf;
        let p2 = b2.approx * tf;
        let v1 = a1.approx + p1;
        let v2 = a2.approx + p2;
        if v1.is_finite() && v2.is_finite() {
            let mag = a1.approx.abs() + p1.abs() + a2.approx.abs() + p2.abs();
            let bound = 8.0 * APPROX_REL_ERR * mag;
            if v1 - v2 > bound {
                return Ordering::Greater;
            }
            if v2 - v1 > bound {
                return Ordering::Less;
            }
        }
        Self::exact_sign_of_lin(a1, b1, a2, b2, t)
    }

    fn signum(&self) -> Ordering {
        match &self.r {
            Repr::Small(n, _) => n.cmp(&0),
            Repr::Big(q) => {
                if q.is_positive() {
                    Ordering::Greater
                } else if q.is_negative() {
                    Ordering::Less
                } else {
                    Ordering::Equal
                }
            }
        }
    }

    fn to_f64(&self) -> f64 {
        self.approx
    }

    fn render(&self) -> String {
        match &self.r {
            Repr::Small(n, d) => format!("{n}/{d}"),
            Repr::Big(q) => format!("{}/{}", q.numer(), q.denom()),
        }
    }

    fn to_json(&self) -> serde_json::Value {
        serde_json::Value::String(self.render())
    }
}

impl Rational {
    pub fn one() -> Self {
        Self::from_int(1)
    }
}

fn tol_eq(a: f64, b: f64, eps: f64) -> bool {
    (a - b).abs() <= eps * a.abs().max(b.abs()).max(1.0)
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn from_int(v: i64) -> Self {
        v as f64
    }

    fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: f64 = n.trim().parse().ok()?;
            let d: f64 = d.trim().parse().ok()?;
            if d == 0.0 {
                return None;
            }
            return Some(n / d);
        }
        let v: f64 = s.parse().ok()?;
        v.is_finite().then_some(v)
    }

    fn add(&self, other: &Self) -> Self {
        self + other
    }

    fn sub(&self, other: &Self) -> Self {
        self - other
    }

    fn mul(&self, other: &Self) -> Self {
        self * other
    }

    fn div(&self, other: &Self) -> Self {
        assert!(*other != 0.0, "division by zero");
        self / other
    }

    fn neg(&self) -> Self {
        -self
    }

    fn half(&self) -> Self {
        self * 0.5
    }

    fn cmp_exact(&self, other: &Self) -> Ordering {
        self.total_cmp(other)
    }

    fn cmp_tol(&self, other: &Self, eps: f64) -> Ordering {
        if tol_eq(*self, *other, eps) {
            Ordering::Equal
        } else {
            self.total_cmp(other)
        }
    }

    fn lin_cmp(a1: &Self, b1: &Self, a2: &Self, b2: &Self, t: &Self, eps: f64) -> Ordering {
        (a1 + b1 * t).cmp_tol(&(a2 + b2 * t), eps)
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn render(&self) -> String {
        format!("{self}")
    }

    fn to_json(&self) -> serde_json::Value {
        serde_json::Number::from_f64(*self)
            .map(serde_json::Value::Number)
            .unwrap_or(serde_json::Value::Null)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;

    #[test]
    fn parses_decimals_exactly() {
        assert_eq!(Rational::parse("1.25").unwrap(), Rational::from_frac(5, 4));
        assert_eq!(Rational::parse("-0.5").unwrap(), Rational::from_frac(-1, 2));
        assert_eq!(Rational::parse("3e2").unwrap(), Rational::from_int(300));
        assert_eq!(Rational::parse("2.5e-1").unwrap(), Rational::from_frac(1, 4));
        assert_eq!(Rational::parse("6/4").unwrap(), Rational::from_frac(3, 2));
        assert!(Rational::parse("abc").is_none());
        assert!(Rational::parse("1/0").is_none());
        assert!(Rational::parse("").is_none());
    }

    #[test]
    fn renders_reduced_fractions() {
        assert_eq!(Rational::from_int(3).render(), "3/1");
        assert_eq!(Rational::from_frac(6, -4).render(), "-3/2");
    }

    #[test]
    fn filtered_comparison_agrees_with_exact() {
        // values that collide in f64 but differ exactly
        let big = Rational::parse("9007199254740993").unwrap();
        let big2 = Rational::parse("9007199254740992").unwrap();
        assert_eq!(big.cmp_exact(&big2), Ordering::Greater);
        let tiny = Rational::from_frac(1, 3);
        let t = Rational::from_int(3);
        let zero = Rational::from_int(0);
        let one = Rational::from_int(1);
        // 1/3 * 3 == 1 exactly
        assert_eq!(
            Rational::lin_cmp(&zero, &tiny, &one, &zero, &t, 0.0),
            Ordering::Equal
        );
    }

    #[test]
    fn small_and_big_paths_agree() {
        let huge = Rational::parse("170141183460469231731687303715884105727").unwrap();
        let two = Rational::from_int(2);
        // overflows i128, so the sum goes through big integers
        let s = huge.add(&huge);
        assert_eq!(s.render(), "340282366920938463463374607431768211454/1");
        assert_eq!(s.div(&two), huge);
        assert_eq!(s.sub(&huge).sub(&huge), Rational::from_int(0));
        let a = Rational::from_frac(7, 12);
        let b = Rational::from_frac(-5, 18);
        assert_eq!(a.add(&b), Rational::from_frac(11, 36));
        assert_eq!(a.mul(&b), Rational::from_frac(-35, 216));
        assert_eq!(a.div(&b), Rational::from_frac(-21, 10));
        assert_eq!(a.cmp_exact(&b), Ordering::Greater);
        assert_eq!(huge.cmp_exact(&s), Ordering::Less);
        assert_eq!(Rational::new(huge.to_big() - huge.to_big() + BigRational::one()), Rational::one());
    }

    #[test]
    fn float_tolerance() {
        assert_eq!(1.0f64.cmp_tol(&(1.0 + 1e-12), 1e-9), Ordering::Equal);
        assert_eq!(1.0f64.cmp_tol(&1.1, 1e-9), Ordering::Less);
        assert_eq!(1.0f64.cmp_exact(&(1.0 + 1e-12)), Ordering::Less);
    }
}
