//! Seeded fail-stop failure traces.
//!
//! Every node draws exponential inter-arrival times with mean `node_mtbf` from
//! its own ChaCha8 stream, so a trace is a pure function of
//! `(seed, n, node_mtbf, horizon)` and does not depend on the order in which
//! nodes are visited. A failed node is replaced by a spare that keeps drawing
//! from the same stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identity of the generator and seeding recipe, recorded in run outputs.
pub const PRNG_IDENTITY: &str = "ChaCha8Rng(rand_chacha 0.9); node stream = seed_from_u64(seed) then set_stream(node)";

pub const HOUR: f64 = 3600.0;
pub const DAY: f64 = 24.0 * HOUR;
pub const YEAR: f64 = 365.0 * DAY;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureEvent {
    pub time: f64,
    pub host: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureTrace {
    pub seed: u64,
    pub node_mtbf: f64,
    pub horizon: f64,
    pub events: Vec<FailureEvent>,
}

/// Inverse-transform exponential sample for a uniform `u` in `[0, 1)`.
pub fn exponential_from_uniform(u: f64, mtbf: f64) -> f64 {
    -mtbf * (-u).ln_1p()
}

pub fn sample_exponential<R: Rng + ?Sized>(rng: &mut R, mtbf: f64) -> Result<f64> {
    if !(mtbf > 0.0 && mtbf.is_finite()) {
        return Err(Error::InvalidParameter(format!("mtbf must be positive, got {mtbf}")));
    }
    let u: f64 = rng.random();
    Ok(exponential_from_uniform(u, mtbf))
}

/// The generator used for node `node` of a trace seeded with `seed`.
pub fn node_rng(seed: u64, node: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(node as u64);
    rng
}

pub fn generate_trace(seed: u64, n: usize, node_mtbf: f64, horizon: f64) -> Result<FailureTrace> {
    if n == 0 {
        return Err(Error::InvalidParameter("failure trace needs at least one node".into()));
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
    }
    let mut events = Vec::new();
    for host in 0..n {
        let mut rng = node_rng(seed, host);
        let mut t = 0.0;
        loop {
            t += sample_exponential(&mut rng, node_mtbf)?;
            if t >= horizon {
                break;
            }
            events.push(FailureEvent { time: t, host });
        }
    }
    Ok(FailureTrace::from_events(seed, node_mtbf, horizon, events))
}

impl FailureTrace {
    /// An empty trace.
    pub fn none() -> Self {
        FailureTrace { seed: 0, node_mtbf: f64::INFINITY, horizon: f64::INFINITY, events: Vec::new() }
    }

    /// A hand-written trace; events are sorted by `(time, host)`.
    pub fn scripted(events: Vec<FailureEvent>) -> Self {
        FailureTrace::from_events(0, f64::INFINITY, f64::INFINITY, events)
    }

    fn from_events(seed: u64, node_mtbf: f64, horizon: f64, mut events: Vec<FailureEvent>) -> Self {
        events.retain(|e| e.time < horizon);
        events.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.host.cmp(&b.host)));
        FailureTrace { seed, node_mtbf, horizon, events }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn cursor(&self) -> FailureCursor<'_> {
        FailureCursor { trace: self, next: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Admission {
    /// The failure happens now; `event.time` is its scheduled time.
    Fire(FailureEvent),
    /// A recovery is in progress; ask again once it completes.
    Defer(FailureEvent),
}

/// Walks a trace in order, enforcing one failure at a time.
#[derive(Debug, Clone)]
pub struct FailureCursor<'a> {
    trace: &'a FailureTrace,
    next: usize,
}

impl<'a> FailureCursor<'a> {
    pub fn peek(&self) -> Option<&'a FailureEvent> {
        self.trace.events.get(self.next)
    }

    pub fn fired(&self) -> usize {
        self.next
    }

    /// Decides the fate of the next event at time `now`. Returns `None` when the
    /// next event is not yet due. A deferred event stays at the cursor.
    pub fn admit(&mut self, now: f64, recovery_active: bool) -> Option<Admission> {
        let event = *self.peek()?;
        if event.time > now {
            return None;
        }
        if recovery_active {
            return Some(Admission::Defer(event));
        }
        self.next += 1;
        Some(Admission::Fire(event))
    }
}

/// One-shot form of [`FailureCursor::admit`].
pub fn admit_failure(cursor: &mut FailureCursor<'_>, now: f64, recovery_active: bool) -> Option<Admission> {
    cursor.admit(now, recovery_active)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn inverse_transform_endpoints() {
        assert_eq!(exponential_from_uniform(0.0, 123.0), 0.0);
        let u = 1.0 - (-1.0f64).exp();
        assert_relative_eq!(exponential_from_uniform(u, 100.0 * HOUR), 100.0 * HOUR, max_relative = 1e-12);
    }

    #[test]
    fn rejects_bad_mtbf() {
        let mut rng = node_rng(1, 0);
        assert!(sample_exponential(&mut rng, 0.0).is_err());
        assert!(sample_exponential(&mut rng, -1.0).is_err());
    }

    #[test]
    fn sample_mean_converges() {
        let mtbf = 100.0 * HOUR;
        let mut rng = node_rng(2024, 7);
        let samples = 1_000_000;
        let sum: f64 = (0..samples).map(|_| sample_exponential(&mut rng, mtbf).unwrap()).sum();
        let mean = sum / samples as f64;
        assert!((mean / mtbf - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn traces_are_deterministic_and_sorted() {
        let a = generate_trace(5, 300, 100.0 * HOUR, 2.7 * HOUR * 10.0).unwrap();
        let b = generate_trace(5, 300, 100.0 * HOUR, 2.7 * HOUR * 10.0).unwrap();
        assert_eq!(a, b);
        assert!(a.events.windows(2).all(|w| w[0].time < w[1].time));
        assert!(a.events.iter().all(|e| e.time < a.horizon));
        let c = generate_trace(6, 300, 100.0 * HOUR, 2.7 * HOUR * 10.0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn node_streams_are_independent_of_node_count() {
        let small = generate_trace(9, 10, 5.0 * HOUR, 50.0 * HOUR).unwrap();
        let large = generate_trace(9, 20, 5.0 * HOUR, 50.0 * HOUR).unwrap();
        let first_ten: Vec<_> = large.events.iter().filter(|e| e.host < 10).copied().collect();
        assert_eq!(small.events, first_ten);
    }

    #[test]
    fn expected_counts_match_system_rate() {
        for (n, expected) in [(1000usize, 27.0), (100, 2.7)] {
            let seeds = 200;
            let total: usize =
                (0..seeds).map(|s| generate_trace(s, n, 100.0 * HOUR, 2.7 * HOUR).unwrap().len()).sum();
            let mean = total as f64 / seeds as f64;
            // Poisson standard error of the mean over 200 traces.
            let se = (expected / seeds as f64).sqrt();
            assert!((mean - expected).abs() < 4.0 * se, "n={n} mean={mean}");
        }
        for s in 0..20 {
            let k = generate_trace(s, 1000, 100.0 * HOUR, 2.7 * HOUR).unwrap().len();
            assert!((2..=60).contains(&k), "seed {s}: {k}");
        }
    }

    #[test]
    fn counts_pass_a_chi_squared_check() {
        // Mean 3 per trace; bins 0..=7 and a tail bin.
        let (n, mtbf, horizon) = (30, 10.0 * HOUR, 1.0 * HOUR);
        let lambda = n as f64 * horizon / mtbf;
        let seeds = 2000u64;
        let mut observed = [0f64; 9];
        for s in 0..seeds {
            let k = generate_trace(s, n, mtbf, horizon).unwrap().len();
            observed[k.min(8)] += 1.0;
        }
        let mut pmf = [0f64; 9];
        let mut p = (-lambda).exp();
        for (k, slot) in pmf.iter_mut().enumerate().take(8) {
            *slot = p;
            p *= lambda / (k + 1) as f64;
        }
        pmf[8] = 1.0 - pmf[..8].iter().sum::<f64>();
        let chi2: f64 =
            observed.iter().zip(pmf).map(|(o, p)| (o - p * seeds as f64).powi(2) / (p * seeds as f64)).sum();
        // 8 degrees of freedom, 99.9% quantile is 26.12.
        assert!(chi2 < 26.12, "chi2 = {chi2}");
    }

    #[test]
    fn admission_defers_during_recovery() {
        let trace = FailureTrace::scripted(vec![
            FailureEvent { time: 51.0, host: 1 },
            FailureEvent { time: 50.0, host: 3 },
        ]);
        let mut cursor = trace.cursor();
        assert_eq!(cursor.admit(49.0, false), None);
        assert_eq!(cursor.admit(50.0, false), Some(Admission::Fire(FailureEvent { time: 50.0, host: 3 })));
        assert_eq!(cursor.admit(51.0, true), Some(Admission::Defer(FailureEvent { time: 51.0, host: 1 })));
        assert_eq!(cursor.admit(90.0, false), Some(Admission::Fire(FailureEvent { time: 51.0, host: 1 })));
        assert_eq!(cursor.admit(1e9, false), None);
        assert_eq!(cursor.fired(), 2);
    }
}
