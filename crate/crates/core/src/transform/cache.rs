//! Bounded single-producer/single-consumer variate cache.
//!
//! [`VariateCache::channel`] hands out exactly one [`CacheProducer`] and one
//! [`CacheConsumer`]; neither is `Clone`, so the SPSC contract is enforced by
//! ownership. Variates come out in the order they went in and each is
//! delivered once. Dropping the producer closes the cache: a blocking read
//! on a closed, empty cache returns [`CacheError::Closed`] instead of
//! waiting forever.

use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::TransformCoeffs;
use crate::distributions::GaussianSpec;
use crate::samplers::OpCounter;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CacheError {
    #[error("cache is empty")]
    Empty,
    #[error("cache is closed and drained")]
    Closed,
    #[error("cache capacity must be >= 1")]
    ZeroCapacity,
    #[error("coefficients target {got:?} but the cache serves {requested:?}")]
    SpecMismatch {
        requested: GaussianSpec,
        got: GaussianSpec,
    },
}

/// How a read behaves when the cache is empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadMode {
    Blocking,
    NonBlocking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub capacity: usize,
    pub occupancy: usize,
    pub high_water: usize,
    pub produced: u64,
    pub consumed: u64,
}

#[derive(Debug)]
struct State {
    buf: VecDeque<f64>,
    high_water: usize,
    produced: u64,
    consumed: u64,
    closed: bool,
}

#[derive(Debug)]
struct Shared {
    capacity: usize,
    requested: GaussianSpec,
    state: Mutex<State>,
    not_empty: Condvar,
    not_full: Condvar,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, State> {
        // the state stays consistent across a panicking peer
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn stats(&self) -> CacheStats {
        let st = self.lock();
        CacheStats {
            capacity: self.capacity,
            occupancy: st.buf.len(),
            high_water: st.high_water,
            produced: st.produced,
            consumed: st.consumed,
        }
    }
}

pub struct VariateCache;

impl VariateCache {
    pub fn channel(
        capacity: usize,
        requested: GaussianSpec,
    ) -> Result<(CacheProducer, CacheConsumer), CacheError> {
        if capacity == 0 {
            return Err(CacheError::ZeroCapacity);
        }
        let shared = Arc::new(Shared {
            capacity,
            requested,
            state: Mutex::new(State {
                buf: VecDeque::with_capacity(capacity),
                high_water: 0,
                produced: 0,
                consumed: 0,
                closed: false,
            }),
            not_empty: Condvar::new(),
            not_full: Condvar::new(),
        });
        Ok((
            CacheProducer {
                shared: Arc::clone(&shared),
            },
            CacheConsumer { shared },
        ))
    }
}

#[derive(Debug)]
pub struct CacheProducer {
    shared: Arc<Shared>,
}

impl CacheProducer {
    pub fn requested_spec(&self) -> &GaussianSpec {
        &self.shared.requested
    }

    pub fn stats(&self) -> CacheStats {
        self.shared.stats()
    }

    fn check(&self, coeffs: &TransformCoeffs) -> Result<(), CacheError> {
        if coeffs.target() != &self.shared.requested {
            return Err(CacheError::SpecMismatch {
                requested: self.shared.requested,
                got: *coeffs.target(),
            });
        }
        Ok(())
    }

    /// Transforms and stores source variates until the cache is full or the
    /// source runs dry, without blocking. Returns how many were stored.
    pub fn fill<I>(
        &mut self,
        source: &mut I,
        coeffs: &TransformCoeffs,
        ops: &mut OpCounter,
    ) -> Result<usize, CacheError>
    where
        I: Iterator<Item = f64>,
    {
        self.check(coeffs)?;
        let mut st = self.shared.lock();
        let added = push_available(&mut st, self.shared.capacity, source, coeffs, ops);
        drop(st);
        if added > 0 {
            self.shared.not_empty.notify_one();
        }
        Ok(added)
    }

    /// Pushes every source variate, waiting for room whenever the cache is
    /// full. Returns the number produced.
    pub fn produce_all<I>(
        &mut self,
        mut source: I,
        coeffs: &TransformCoeffs,
        ops: &mut OpCounter,
    ) -> Result<u64, CacheError>
    where
        I: Iterator<Item = f64>,
    {
        self.check(coeffs)?;
        let mut source = source.by_ref().peekable();
        let mut total = 0u64;
        while source.peek().is_some() {
            let mut st = self.shared.lock();
            while st.buf.len() == self.shared.capacity {
                st = self.shared.not_full.wait(st).unwrap_or_else(|e| e.into_inner());
            }
            total += push_available(&mut st, self.shared.capacity, &mut source, coeffs, ops) as u64;
            drop(st);
            self.shared.not_empty.notify_one();
        }
        Ok(total)
    }
}

impl Drop for CacheProducer {
    fn drop(&mut self) {
        self.shared.lock().closed = true;
        self.shared.not_empty.notify_all();
    }
}

fn push_available<I: Iterator<Item = f64>>(
    st: &mut State,
    capacity: usize,
    source: &mut I,
    coeffs: &TransformCoeffs,
    ops: &mut OpCounter,
) -> usize {
    let mut added = 0;
    while st.buf.len() < capacity {
        let Some(x) = source.next() else { break };
        st.buf.push_back(coeffs.apply(x, ops));
        added += 1;
    }
    st.produced += added as u64;
    st.high_water = st.high_water.max(st.buf.len());
    added
}

#[derive(Debug)]
pub struct CacheConsumer {
    shared: Arc<Shared>,
}

impl CacheConsumer {
    pub fn requested_spec(&self) -> &GaussianSpec {
        &self.shared.requested
    }

    pub fn stats(&self) -> CacheStats {
        self.shared.stats()
    }

    pub fn read(&mut self, mode: ReadMode) -> Result<f64, CacheError> {
        let mut st = self.shared.lock();
        loop {
            if let Some(x) = st.buf.pop_front() {
                st.consumed += 1;
                drop(st);
                self.shared.not_full.notify_one();
                return Ok(x);
            }
            match mode {
                ReadMode::NonBlocking if st.closed => return Err(CacheError::Closed),
                ReadMode::NonBlocking => return Err(CacheError::Empty),
                ReadMode::Blocking if st.closed => return Err(CacheError::Closed),
                ReadMode::Blocking => {
                    st = self.shared.not_empty.wait(st).unwrap_or_else(|e| e.into_inner());
                }
            }
        }
    }

    /// Moves everything currently resident into `out`, waiting first if the
    /// cache is empty. Returns 0 once the cache is closed and drained.
    pub fn drain_into(&mut self, out: &mut Vec<f64>) -> usize {
        let mut st = self.shared.lock();
        while st.buf.is_empty() && !st.closed {
            st = self.shared.not_empty.wait(st).unwrap_or_else(|e| e.into_inner());
        }
        let n = st.buf.len();
        out.extend(st.buf.drain(..));
        st.consumed += n as u64;
        drop(st);
        if n > 0 {
            self.shared.not_full.notify_one();
        }
        n
    }
}

/// Runs `source` through `coeffs` and a cache of `capacity` with the producer
/// on its own thread, draining on the calling thread. Output order equals
/// source order.
pub fn deliver<I>(
    source: I,
    coeffs: &TransformCoeffs,
    capacity: usize,
) -> Result<(Vec<f64>, CacheStats, OpCounter), CacheError>
where
    I: Iterator<Item = f64> + Send,
{
    let (mut producer, mut consumer) = VariateCache::channel(capacity, *coeffs.target())?;
    producer.check(coeffs)?;
    let (lower, _) = source.size_hint();
    let mut out = Vec::with_capacity(lower);
    let ops = std::thread::scope(|scope| {
        let handle = scope.spawn(move || {
            let mut ops = OpCounter::default();
            producer
                .produce_all(source, coeffs, &mut ops)
                .map(|_| ops)
        });
        while consumer.drain_into(&mut out) > 0 {}
        handle.join().expect("cache producer panicked")
    })?;
    Ok((out, consumer.stats(), ops))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::make_coeffs;

    fn identity() -> TransformCoeffs {
        let s = GaussianSpec::standard();
        make_coeffs(&s, &s)
    }

    #[test]
    fn fifo_capacity_eight() {
        let (mut p, mut c) = VariateCache::channel(8, GaussianSpec::standard()).unwrap();
        let mut ops = OpCounter::default();
        let mut src = (0..20).map(f64::from);
        assert_eq!(p.fill(&mut src, &identity(), &mut ops).unwrap(), 8);
        assert_eq!(p.stats().occupancy, 8);
        // full: nothing more goes in
        assert_eq!(p.fill(&mut src, &identity(), &mut ops).unwrap(), 0);
        let got: Vec<f64> = (0..8).map(|_| c.read(ReadMode::NonBlocking).unwrap()).collect();
        assert_eq!(got, (0..8).map(f64::from).collect::<Vec<_>>());
        let st = c.stats();
        assert_eq!((st.occupancy, st.produced, st.consumed, st.high_water), (0, 8, 8, 8));
        assert_eq!(ops.arithmetic_ops(), 16);
    }

    #[test]
    fn empty_read_signals() {
        let (p, mut c) = VariateCache::channel(4, GaussianSpec::standard()).unwrap();
        assert_eq!(c.read(ReadMode::NonBlocking), Err(CacheError::Empty));
        drop(p);
        assert_eq!(c.read(ReadMode::NonBlocking), Err(CacheError::Closed));
        assert_eq!(c.read(ReadMode::Blocking), Err(CacheError::Closed));
    }

    #[test]
    fn rejects_foreign_coefficients() {
        let (mut p, _c) = VariateCache::channel(4, GaussianSpec::new(5.0, 1.0).unwrap()).unwrap();
        let mut ops = OpCounter::default();
        let mut src = std::iter::once(1.0);
        assert!(matches!(
            p.fill(&mut src, &identity(), &mut ops),
            Err(CacheError::SpecMismatch { .. })
        ));
        assert!(VariateCache::channel(0, GaussianSpec::standard()).is_err());
    }

    #[test]
    fn blocking_read_waits_for_producer() {
        let (mut p, mut c) = VariateCache::channel(2, GaussianSpec::standard()).unwrap();
        let coeffs = identity();
        std::thread::scope(|s| {
            s.spawn(move || {
                let mut ops = OpCounter::default();
                p.produce_all((0..1000).map(f64::from), &coeffs, &mut ops).unwrap();
            });
            for i in 0..1000 {
                assert_eq!(c.read(ReadMode::Blocking).unwrap(), f64::from(i));
                assert!(c.stats().occupancy <= 2);
            }
            assert_eq!(c.read(ReadMode::Blocking), Err(CacheError::Closed));
        });
    }

    #[test]
    fn deliver_preserves_order() {
        let target = GaussianSpec::new(10.0, 2.0).unwrap();
        let coeffs = make_coeffs(&GaussianSpec::standard(), &target);
        let xs: Vec<f64> = (0..10_000).map(|i| f64::from(i) * 1e-3).collect();
        let (out, stats, ops) = deliver(xs.iter().copied(), &coeffs, 64).unwrap();
        let mut scratch = OpCounter::default();
        assert_eq!(out, coeffs.apply_all(&xs, &mut scratch));
        assert_eq!(stats.produced, 10_000);
        assert_eq!(stats.consumed, 10_000);
        assert!(stats.high_water <= 64);
        assert_eq!(ops.arithmetic_ops(), 20_000);
    }
}
