//! Local tuple storage partitioned into sub-spaces by arity.
//!
//! All operations on one [`TupleSpace`] are serialized by an internal lock,
//! so they are linearizable when called from several threads. Among several
//! matching tuples the oldest (first inserted) wins.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Mutex;

use crate::codec::{Tuple, Value, MAX_ARITY};

/// Milliseconds on whatever clock the caller uses (wall or simulated).
pub type Millis = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lifetime {
    Never,
    Millis(u64),
}

impl Lifetime {
    fn expires_at(self, now: Millis) -> Option<Millis> {
        match self {
            Lifetime::Never => None,
            Lifetime::Millis(ms) => Some(now.saturating_add(ms)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Local,
    Remote(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredTuple {
    pub tuple: Tuple,
    pub inserted_at: Millis,
    pub expires_at: Option<Millis>,
    pub origin: Origin,
}

impl StoredTuple {
    fn live_at(&self, now: Millis) -> bool {
        self.expires_at.is_none_or(|e| e >= now)
    }
}

/// A tuple whose `Formal` elements act as wildcards.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern(Tuple);

impl Pattern {
    pub fn new(t: Tuple) -> Self {
        Pattern(t)
    }

    pub fn as_tuple(&self) -> &Tuple {
        &self.0
    }

    pub fn into_tuple(self) -> Tuple {
        self.0
    }

    pub fn arity(&self) -> usize {
        self.0.arity()
    }

    pub fn matches(&self, t: &Tuple) -> bool {
        match_pattern(self, t)
    }
}

impl From<Tuple> for Pattern {
    fn from(t: Tuple) -> Self {
        Pattern(t)
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Element-wise match. Numbers compare after promoting Int16 to Float32.
pub fn match_pattern(p: &Pattern, t: &Tuple) -> bool {
    p.arity() == t.arity()
        && p
            .0
            .values()
            .iter()
            .zip(t.values())
            .all(|(pv, tv)| value_matches(pv, tv))
}

fn value_matches(p: &Value, t: &Value) -> bool {
    match (p, t) {
        (Value::Formal, _) => true,
        (Value::Str(a), Value::Str(b)) => a == b,
        _ => match (p.as_f32(), t.as_f32()) {
            (Some(a), Some(b)) => a == b,
            _ => false,
        },
    }
}

#[derive(Default)]
struct Inner {
    subspaces: [VecDeque<StoredTuple>; MAX_ARITY],
    // Highest `now` seen; keeps expiry monotone if a caller's clock steps back.
    clock: Millis,
}

impl Inner {
    fn advance(&mut self, now: Millis) -> Millis {
        self.clock = self.clock.max(now);
        self.clock
    }

    fn sub(&mut self, arity: usize) -> &mut VecDeque<StoredTuple> {
        &mut self.subspaces[arity - 1]
    }

    fn find(&mut self, p: &Pattern, now: Millis) -> Option<usize> {
        let now = self.advance(now);
        self.sub(p.arity())
            .iter()
            .position(|st| st.live_at(now) && match_pattern(p, &st.tuple))
    }
}

pub struct TupleSpace {
    name: String,
    inner: Mutex<Inner>,
}

impl fmt::Debug for TupleSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TupleSpace")
            .field("name", &self.name)
            .field("len", &self.len())
            .finish()
    }
}

impl TupleSpace {
    pub fn new(name: impl Into<String>) -> Self {
        TupleSpace {
            name: name.into(),
            inner: Mutex::new(Inner::default()),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        // a panicking caller cannot leave Inner half-updated
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn out_local(
        &self,
        t: Tuple,
        lifetime: Lifetime,
        now: Millis,
        origin: Origin,
    ) -> StoredTuple {
        let mut inner = self.lock();
        let now = inner.advance(now);
        let stored = StoredTuple {
            expires_at: lifetime.expires_at(now),
            inserted_at: now,
            tuple: t,
            origin,
        };
        inner.sub(stored.tuple.arity()).push_back(stored.clone());
        stored
    }

    pub fn rd_local(&self, p: &Pattern, now: Millis) -> Option<Tuple> {
        let mut inner = self.lock();
        let i = inner.find(p, now)?;
        Some(inner.sub(p.arity())[i].tuple.clone())
    }

    pub fn inp_local(&self, p: &Pattern, now: Millis) -> Option<Tuple> {
        let mut inner = self.lock();
        let i = inner.find(p, now)?;
        inner.sub(p.arity()).remove(i).map(|st| st.tuple)
    }

    pub fn rm_local(&self, p: &Pattern, now: Millis) -> usize {
        let mut inner = self.lock();
        let now = inner.advance(now);
        let sub = inner.sub(p.arity());
        let before = sub.len();
        sub.retain(|st| !(st.live_at(now) && match_pattern(p, &st.tuple)));
        before - sub.len()
    }

    pub fn test_local(&self, p: &Pattern, now: Millis) -> bool {
        self.lock().find(p, now).is_some()
    }

    /// Drops every tuple whose lifetime ended before `now`.
    pub fn expire_sweep(&self, now: Millis) -> usize {
        let mut inner = self.lock();
        let now = inner.advance(now);
        inner
            .subspaces
            .iter_mut()
            .map(|sub| {
                let before = sub.len();
                sub.retain(|st| st.live_at(now));
                before - sub.len()
            })
            .sum()
    }

    /// Number of stored tuples, including expired ones not yet swept.
    pub fn len(&self) -> usize {
        self.lock().subspaces.iter().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Snapshot of one arity sub-space in insertion order.
    pub fn snapshot(&self, arity: usize) -> Vec<StoredTuple> {
        if !(1..=MAX_ARITY).contains(&arity) {
            return Vec::new();
        }
        self.lock().sub(arity).iter().cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: &str) -> Value {
        Value::string(x).unwrap()
    }

    fn t(values: Vec<Value>) -> Tuple {
        Tuple::new(values).unwrap()
    }

    fn p(values: Vec<Value>) -> Pattern {
        Pattern::new(t(values))
    }

    #[test]
    fn match_examples() {
        let sensor = t(vec![s("SENSOR"), s("LIGHT"), Value::Int16(1000)]);
        assert!(match_pattern(&p(vec![s("SENSOR"), s("LIGHT"), Value::Formal]), &sensor));
        assert!(!match_pattern(&p(vec![s("A")]), &t(vec![s("A"), s("B")])));
        assert!(match_pattern(&p(vec![Value::Formal]), &t(vec![s("X")])));
        assert!(match_pattern(&p(vec![Value::Int16(5)]), &t(vec![Value::Float32(5.0)])));
        assert!(!match_pattern(&p(vec![Value::Int16(5)]), &t(vec![s("5")])));
        // a literal Formal inside a stored tuple only matches a Formal pattern slot
        assert!(!match_pattern(&p(vec![s("A")]), &t(vec![Value::Formal])));
    }

    #[test]
    fn out_then_rd() {
        let ts = TupleSpace::new("ble");
        let sensor = t(vec![s("SENSOR"), s("LIGHT"), Value::Int16(1000)]);
        ts.out_local(sensor.clone(), Lifetime::Never, 0, Origin::Local);
        let pat = p(vec![s("SENSOR"), s("LIGHT"), Value::Formal]);
        assert_eq!(ts.rd_local(&pat, 1), Some(sensor.clone()));
        assert_eq!(ts.rd_local(&pat, 2), Some(sensor));
        assert_eq!(ts.len(), 1);
    }

    #[test]
    fn fifo_tie_break() {
        let ts = TupleSpace::new("x");
        ts.out_local(t(vec![s("A"), Value::Int16(1)]), Lifetime::Never, 0, Origin::Local);
        ts.out_local(t(vec![s("A"), Value::Int16(2)]), Lifetime::Never, 1, Origin::Local);
        let pat = p(vec![s("A"), Value::Formal]);
        assert_eq!(ts.rd_local(&pat, 2).unwrap().get(1), Some(&Value::Int16(1)));
        assert_eq!(ts.inp_local(&pat, 2).unwrap().get(1), Some(&Value::Int16(1)));
        assert_eq!(ts.inp_local(&pat, 2).unwrap().get(1), Some(&Value::Int16(2)));
        assert_eq!(ts.inp_local(&pat, 2), None);
    }

    #[test]
    fn empty_space() {
        let ts = TupleSpace::new("x");
        let pat = p(vec![Value::Formal]);
        assert_eq!(ts.rd_local(&pat, 0), None);
        assert_eq!(ts.inp_local(&pat, 0), None);
        assert!(!ts.test_local(&pat, 0));
        assert_eq!(ts.rm_local(&pat, 0), 0);
        assert_eq!(ts.expire_sweep(0), 0);
    }

    #[test]
    fn rm_removes_all_matches() {
        let ts = TupleSpace::new("x");
        for i in 0..3 {
            ts.out_local(t(vec![s("A"), Value::Int16(i)]), Lifetime::Never, 0, Origin::Local);
        }
        ts.out_local(t(vec![s("B"), Value::Int16(9)]), Lifetime::Never, 0, Origin::Local);
        ts.out_local(t(vec![s("A")]), Lifetime::Never, 0, Origin::Local);
        assert_eq!(ts.rm_local(&p(vec![s("A"), Value::Formal]), 0), 3);
        assert!(!ts.test_local(&p(vec![s("A"), Value::Formal]), 0));
        assert_eq!(ts.rm_local(&p(vec![Value::Formal, Value::Formal]), 0), 1);
        assert_eq!(ts.len(), 1);
    }

    #[test]
    fn lifetime_boundaries() {
        let ts = TupleSpace::new("x");
        let pat = p(vec![s("L")]);
        ts.out_local(t(vec![s("L")]), Lifetime::Millis(50), 0, Origin::Local);
        assert!(ts.test_local(&pat, 50));
        assert!(!ts.test_local(&pat, 51));
        // expiry is monotone even if the clock steps back
        assert!(!ts.test_local(&pat, 10));
        assert_eq!(ts.expire_sweep(100), 1);
        assert!(ts.is_empty());
    }

    #[test]
    fn zero_lifetime_and_never() {
        let ts = TupleSpace::new("x");
        ts.out_local(t(vec![s("Z")]), Lifetime::Millis(0), 10, Origin::Local);
        ts.out_local(t(vec![s("N")]), Lifetime::Never, 10, Origin::Local);
        assert_eq!(ts.expire_sweep(11), 1);
        assert_eq!(ts.expire_sweep(u64::MAX), 0);
        assert!(ts.test_local(&p(vec![s("N")]), u64::MAX));
    }

    #[test]
    fn arity_partition() {
        let ts = TupleSpace::new("x");
        for k in 1..=4 {
            ts.out_local(t(vec![Value::Int16(1); k]), Lifetime::Never, 0, Origin::Local);
        }
        for k in 1..=4 {
            let snap = ts.snapshot(k);
            assert_eq!(snap.len(), 1);
            assert!(snap.iter().all(|st| st.tuple.arity() == k));
        }
        assert!(ts.snapshot(5).is_empty());
    }
}
