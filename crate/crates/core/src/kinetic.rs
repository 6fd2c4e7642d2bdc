//! Affine motions, certificate failure times, and the global event queue.

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

use crate::scalar::Scalar;

/// `value(t) = a + b * t`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMotion<S> {
    pub a: S,
    pub b: S,
}

impl<S: Scalar> LinearMotion<S> {
    pub fn new(a: S, b: S) -> Self {
        LinearMotion { a, b }
    }

    pub fn value_at(&self, t: &S) -> S {
        self.a.add(&self.b.mul(t))
    }

    /// Compares `self(t)` with `other(t)`.
    pub fn cmp_at(&self, other: &Self, t: &S, eps: f64) -> Ordering {
        S::lin_cmp(&self.a, &self.b, &other.a, &other.b, t, eps)
    }
}

/// A point in simulated time; `Infinite` sorts after every finite time.
#[derive(Clone, PartialEq)]
pub enum Time<S> {
    Finite(S),
    Infinite,
}

impl<S: Scalar> Time<S> {
    pub fn zero() -> Self {
        Time::Finite(S::from_int(0))
    }

    pub fn finite(&self) -> Option<&S> {
        match self {
            Time::Finite(t) => Some(t),
            Time::Infinite => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Time::Infinite)
    }

    pub fn cmp_time(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Time::Finite(a), Time::Finite(b)) => a.cmp_exact(b),
            (Time::Finite(_), Time::Infinite) => Ordering::Less,
            (Time::Infinite, Time::Finite(_)) => Ordering::Greater,
            (Time::Infinite, Time::Infinite) => Ordering::Equal,
        }
    }
}

impl<S: Scalar> fmt::Debug for Time<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Time::Finite(t) => write!(f, "{}", t.render()),
            Time::Infinite => write!(f, "+inf"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KineticError {
    #[error("certificate assertion already violated at the current time")]
    AssertionViolated,
    #[error("queue handle {0:?} is not live")]
    DeadHandle(Handle),
    #[error("tournament is empty")]
    EmptyTournament,
    #[error("certificate is not failing at the current time")]
    NotFailing,
}

/// Earliest `t >= now` at which `lhs(t) <= rhs(t)` stops holding.
///
/// For crossing lines this is the crossing instant itself: the certificate is
/// considered failed as soon as the two values meet while `lhs` is catching up.
pub fn failure_time<S: Scalar>(
    lhs: &LinearMotion<S>,
    rhs: &LinearMotion<S>,
    now: &S,
    eps: f64,
) -> Result<Time<S>, KineticError> {
    let at_now = lhs.cmp_at(rhs, now, eps);
    if at_now == Ordering::Greater {
        return Err(KineticError::AssertionViolated);
    }
    if lhs.b.cmp_exact(&rhs.b) != Ordering::Greater {
        return Ok(Time::Infinite);
    }
    if at_now == Ordering::Equal {
        return Ok(Time::Finite(now.clone()));
    }
    let t = rhs.a.sub(&lhs.a).div(&lhs.b.sub(&rhs.b));
    // rounding in float mode can land a hair before `now`
    Ok(Time::Finite(if t.cmp_exact(now) == Ordering::Less {
        now.clone()
    } else {
        t
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CertKind {
    TournamentMin,
    TournamentMax,
    Linking,
}

/// Stable reference to a scheduled entry. `seq` is the scheduling order and
/// breaks ties between equal failure times.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Handle {
    seq: u64,
    slot: u32,
}

impl Handle {
    pub fn seq(&self) -> u64 {
        self.seq
    }
}

#[derive(Clone)]
struct Entry<S, P> {
    time: Time<S>,
    seq: u64,
    pos: u32,
    payload: P,
}

/// Addressable binary min-heap keyed by `(failure_time, handle)`.
#[derive(Clone)]
pub struct EventQueue<S, P> {
    heap: Vec<u32>,
    slots: Vec<Option<Entry<S, P>>>,
    free: Vec<u32>,
    next_seq: u64,
    peak: usize,
}

impl<S: Scalar, P> Default for EventQueue<S, P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar, P> EventQueue<S, P> {
    pub fn new() -> Self {
        EventQueue {
            heap: Vec::new(),
            slots: Vec::new(),
            free: Vec::new(),
            next_seq: 0,
            peak: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Largest number of simultaneously scheduled entries seen so far.
    pub fn peak_len(&self) -> usize {
        self.peak
    }

    fn entry(&self, slot: u32) -> &Entry<S, P> {
        self.slots[slot as usize].as_ref().expect("live slot")
    }

    fn less(&self, a: u32, b: u32) -> bool {
        let (ea, eb) = (self.entry(a), self.entry(b));
        match ea.time.cmp_time(&eb.time) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => ea.seq < eb.seq,
        }
    }

    fn set_pos(&mut self, i: usize) {
        let slot = self.heap[i];
        self.slots[slot as usize].as_mut().unwrap().pos = i as u32;
    }

    fn sift_up(&mut self, mut i: usize) {
        while i > 0 {
            let parent = (i - 1) / 2;
            if self.less(self.heap[i], self.heap[parent]) {
                self.heap.swap(i, parent);
                self.set_pos(i);
                self.set_pos(parent);
                i = parent;
            } else {
                break;
            }
        }
    }

    fn sift_down(&mut self, mut i: usize) {
        let n = self.heap.len();
        loop {
            let (l, r) = (2 * i + 1, 2 * i + 2);
            let mut best = i;
            if l < n && self.less(self.heap[l], self.heap[best]) {
                best = l;
            }
            if r < n && self.less(self.heap[r], self.heap[best]) {
                best = r;
            }
            if best == i {
                break;
            }
            self.heap.swap(i, best);
            self.set_pos(i);
            self.set_pos(best);
            i = best;
        }
    }

    pub fn schedule(&mut self, time: Time<S>, payload: P) -> Handle {
        let seq = self.next_seq;
        self.next_seq += 1;
        let slot = match self.free.pop() {
            Some(s) => s,
            None => {
                self.slots.push(None);
                (self.slots.len() - 1) as u32
            }
        };
        let pos = self.heap.len() as u32;
        self.slots[slot as usize] = Some(Entry {
            time,
            seq,
            pos,
            payload,
        });
        self.heap.push(slot);
        self.sift_up(pos as usize);
        self.peak = self.peak.max(self.heap.len());
        Handle { seq, slot }
    }

    fn live(&self, h: Handle) -> bool {
        matches!(self.slots.get(h.slot as usize), Some(Some(e)) if e.seq == h.seq)
    }

    pub fn get(&self, h: Handle) -> Option<(&Time<S>, &P)> {
        if self.live(h) {
            let e = self.entry(h.slot);
            Some((&e.time, &e.payload))
        } else {
            None
        }
    }

    fn remove_at(&mut self, i: usize) -> Entry<S, P> {
        let last = self.heap.len() - 1;
        self.heap.swap(i, last);
        let slot = self.heap.pop().unwrap();
        if i < self.heap.len() {
            self.set_pos(i);
            self.sift_down(i);
            self.sift_up(i);
        }
        self.free.push(slot);
        self.slots[slot as usize].take().unwrap()
    }

    pub fn cancel(&mut self, h: Handle) -> Result<P, KineticError> {
        if !self.live(h) {
            return Err(KineticError::DeadHandle(h));
        }
        let pos = self.entry(h.slot).pos as usize;
        Ok(self.remove_at(pos).payload)
    }

    pub fn peek(&self) -> Option<(&Time<S>, Handle, &P)> {
        let slot = *self.heap.first()?;
        let e = self.entry(slot);
        Some((&e.time, Handle { seq: e.seq, slot }, &e.payload))
    }

    /// Removes and returns the minimum entry if its time is `<= bound`.
    pub fn pop_due(&mut self, bound: &Time<S>) -> Option<(Time<S>, Handle, P)> {
        let (t, _, _) = self.peek()?;
        if t.cmp_time(bound) == Ordering::Greater {
            return None;
        }
        let slot = self.heap[0];
        let e = self.remove_at(0);
        Some((e.time, Handle { seq: e.seq, slot }, e.payload))
    }

    /// All live entries whose time equals the current minimum, in no particular order.
    pub fn min_ties(&self) -> Vec<Handle> {
        let mut out = Vec::new();
        let Some(&root) = self.heap.first() else {
            return out;
        };
        let tmin = &self.entry(root).time;
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            let slot = self.heap[i];
            let e = self.entry(slot);
            if e.time.cmp_time(tmin) != Ordering::Equal {
                continue;
            }
            out.push(Handle { seq: e.seq, slot });
            for c in [2 * i + 1, 2 * i + 2] {
                if c < self.heap.len() {
                    stack.push(c);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;
    use proptest::prelude::*;

    fn r(v: i64) -> Rational {
        Rational::from_int(v)
    }

    fn m(a: i64, b: Rational) -> LinearMotion<Rational> {
        LinearMotion::new(r(a), b)
    }

    #[test]
    fn failure_time_examples() {
        // r_q with q.x = 4, q.w = 1 against l_p with p.x = 10, p.w = 2
        let lhs = m(4, Rational::from_frac(1, 2));
        let rhs = m(10, r(-1));
        assert_eq!(failure_time(&lhs, &rhs, &r(0), 0.0).unwrap(), Time::Finite(r(4)));

        let par = failure_time(&m(0, r(1)), &m(5, r(1)), &r(0), 0.0).unwrap();
        assert_eq!(par, Time::Infinite);

        // equal now, lhs heading below
        assert_eq!(failure_time(&m(3, r(-1)), &m(3, r(1)), &r(0), 0.0).unwrap(), Time::Infinite);
        // equal now, lhs heading above
        assert_eq!(failure_time(&m(3, r(2)), &m(3, r(1)), &r(0), 0.0).unwrap(), Time::Finite(r(0)));

        assert_eq!(
            failure_time(&m(6, r(0)), &m(3, r(1)), &r(0), 0.0),
            Err(KineticError::AssertionViolated)
        );
    }

    #[test]
    fn failure_time_is_the_crossing_exactly() {
        let lhs = LinearMotion::new(Rational::from_frac(7, 3), Rational::from_frac(5, 11));
        let rhs = LinearMotion::new(Rational::from_frac(19, 2), Rational::from_frac(-2, 7));
        let Time::Finite(t) = failure_time(&lhs, &rhs, &r(1), 0.0).unwrap() else {
            panic!("expected finite");
        };
        assert_eq!(lhs.value_at(&t), rhs.value_at(&t));
    }

    #[test]
    fn queue_examples() {
        let mut q: EventQueue<Rational, &str> = EventQueue::new();
        q.schedule(Time::Finite(r(3)), "c");
        q.schedule(Time::Finite(r(1)), "a");
        q.schedule(Time::Finite(r(2)), "b");
        let order: Vec<_> = std::iter::from_fn(|| q.pop_due(&Time::Infinite).map(|e| e.2)).collect();
        assert_eq!(order, ["a", "b", "c"]);

        let h1 = q.schedule(Time::Finite(r(2)), "h1");
        let h2 = q.schedule(Time::Finite(r(2)), "h2");
        assert!(h1 < h2);
        assert_eq!(q.pop_due(&Time::Infinite).unwrap().2, "h1");
        assert_eq!(q.pop_due(&Time::Infinite).unwrap().2, "h2");

        let h = q.schedule(Time::Finite(r(5)), "x");
        assert_eq!(q.cancel(h), Ok("x"));
        assert!(q.pop_due(&Time::Infinite).is_none());
        assert_eq!(q.cancel(h), Err(KineticError::DeadHandle(h)));
    }

    #[test]
    fn pop_due_respects_bound() {
        let mut q: EventQueue<Rational, u8> = EventQueue::new();
        q.schedule(Time::Finite(r(5)), 0);
        assert!(q.pop_due(&Time::Finite(r(4))).is_none());
        assert!(q.pop_due(&Time::Finite(r(5))).is_some());
    }

    #[test]
    fn min_ties_collects_all_equal_minima() {
        let mut q: EventQueue<Rational, u8> = EventQueue::new();
        for (t, p) in [(3, 0), (1, 1), (1, 2), (2, 3), (1, 4), (1, 5)] {
            q.schedule(Time::Finite(r(t)), p);
        }
        let mut got: Vec<u8> = q.min_ties().into_iter().map(|h| *q.get(h).unwrap().1).collect();
        got.sort();
        assert_eq!(got, [1, 2, 4, 5]);
    }

    #[derive(Debug, Clone)]
    enum Op {
        Schedule(i64),
        Cancel(usize),
        Pop,
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0i64..20).prop_map(Op::Schedule),
            (0usize..64).prop_map(Op::Cancel),
            Just(Op::Pop),
        ]
    }

    proptest! {
        #[test]
        fn drains_in_time_then_handle_order(ops in proptest::collection::vec(op(), 0..200)) {
            let mut q: EventQueue<Rational, u64> = EventQueue::new();
            // reference: sorted list of (time, seq)
            let mut reference: Vec<(i64, u64, Handle)> = Vec::new();
            let mut handles: Vec<Handle> = Vec::new();
            for op in ops {
                match op {
                    Op::Schedule(t) => {
                        let h = q.schedule(Time::Finite(r(t)), 0);
                        reference.push((t, h.seq(), h));
                        handles.push(h);
                    }
                    Op::Cancel(i) => {
                        if handles.is_empty() { continue; }
                        let h = handles[i % handles.len()];
                        let live = reference.iter().position(|e| e.2 == h);
                        match live {
                            Some(p) => { reference.remove(p); prop_assert!(q.cancel(h).is_ok()); }
                            None => prop_assert!(q.cancel(h).is_err()),
                        }
                    }
                    Op::Pop => {
                        reference.sort();
                        let want = if reference.is_empty() { None } else { Some(reference.remove(0)) };
                        let got = q.pop_due(&Time::Infinite);
                        prop_assert_eq!(want.map(|e| e.2), got.map(|e| e.1));
                    }
                }
            }
            reference.sort();
            for e in reference {
                let got = q.pop_due(&Time::Infinite).unwrap();
                prop_assert_eq!(got.1, e.2);
                prop_assert_eq!(got.0, Time::Finite(r(e.0)));
            }
            prop_assert!(q.is_empty());
        }
    }
}
