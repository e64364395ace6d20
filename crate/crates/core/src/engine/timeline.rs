//! Per-host power-state timelines and their energy integral.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::platform::{power_draw, HostState, PowerModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateInterval {
    pub start: f64,
    pub end: f64,
    pub state: HostState,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StateTimeline {
    pub makespan: f64,
    pub hosts: Vec<Vec<StateInterval>>,
}

impl StateTimeline {
    pub fn new(n: usize) -> Self {
        StateTimeline { makespan: 0.0, hosts: vec![Vec::new(); n] }
    }

    /// Appends `[start, end)` in `state`, merging with a preceding interval in the same state.
    pub fn push(&mut self, host: usize, start: f64, end: f64, state: HostState) {
        if end <= start {
            return;
        }
        let intervals = &mut self.hosts[host];
        if let Some(last) = intervals.last_mut() {
            if last.state == state && last.end == start {
                last.end = end;
                return;
            }
        }
        intervals.push(StateInterval { start, end, state });
    }

    /// State of `host` at time `t`; the later interval wins at boundaries.
    pub fn state_at(&self, host: usize, t: f64) -> Option<HostState> {
        let intervals = &self.hosts[host];
        let k = intervals.partition_point(|iv| iv.start <= t);
        let iv = intervals.get(k.checked_sub(1)?)?;
        (t < iv.end || (t == iv.end && k == intervals.len())).then_some(iv.state)
    }

    /// Seconds `host` spends in `state`.
    pub fn time_in(&self, host: usize, state: HostState) -> f64 {
        self.hosts[host].iter().filter(|iv| iv.state == state).map(|iv| iv.end - iv.start).sum()
    }
}

/// Integrates power over every host's timeline; returns per-host and total joules.
pub fn integrate_timeline(timeline: &StateTimeline, power: &PowerModel) -> Result<(Vec<f64>, f64)> {
    let mut per_host = Vec::with_capacity(timeline.hosts.len());
    for (host, intervals) in timeline.hosts.iter().enumerate() {
        let malformed = |reason: String| Error::MalformedTimeline { host, reason };
        let mut cursor = 0.0;
        let mut energy = 0.0;
        for iv in intervals {
            if iv.start != cursor {
                return Err(malformed(format!("expected an interval starting at {cursor}, found {}", iv.start)));
            }
            if !(iv.end > iv.start) {
                return Err(malformed(format!("empty or reversed interval [{}, {})", iv.start, iv.end)));
            }
            energy += power_draw(iv.state, power) * (iv.end - iv.start);
            cursor = iv.end;
        }
        if cursor != timeline.makespan {
            return Err(malformed(format!("timeline ends at {cursor}, makespan is {}", timeline.makespan)));
        }
        per_host.push(energy);
    }
    let total = per_host.iter().sum();
    Ok((per_host, total))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(intervals: &[(f64, f64, HostState)]) -> StateTimeline {
        let mut t = StateTimeline::new(1);
        for &(s, e, st) in intervals {
            t.push(0, s, e, st);
        }
        t.makespan = intervals.last().map_or(0.0, |iv| iv.1);
        t
    }

    #[test]
    fn piecewise_energy() {
        let p = PowerModel::default();
        let busy = single(&[(0.0, 100.0, HostState::Computing)]);
        assert_eq!(integrate_timeline(&busy, &p).unwrap().1, 12_500.0);
        let idle = single(&[
            (0.0, 40.0, HostState::Computing),
            (40.0, 60.0, HostState::IdleScaled),
            (60.0, 100.0, HostState::Computing),
        ]);
        assert_eq!(integrate_timeline(&idle, &p).unwrap().1, 12_200.0);
        let unscaled = single(&[
            (0.0, 40.0, HostState::Computing),
            (40.0, 60.0, HostState::IdleUnscaled),
            (60.0, 100.0, HostState::Computing),
        ]);
        let diff = integrate_timeline(&unscaled, &p).unwrap().1 - integrate_timeline(&idle, &p).unwrap().1;
        assert!((diff / 20.0 - 13.5).abs() < 1e-12);
    }

    #[test]
    fn merges_and_queries() {
        let t = single(&[(0.0, 5.0, HostState::Computing), (5.0, 7.0, HostState::Computing), (7.0, 9.0, HostState::IdleScaled)]);
        assert_eq!(t.hosts[0].len(), 2);
        assert_eq!(t.state_at(0, 6.0), Some(HostState::Computing));
        assert_eq!(t.state_at(0, 7.0), Some(HostState::IdleScaled));
        assert_eq!(t.state_at(0, 9.0), Some(HostState::IdleScaled));
        assert_eq!(t.state_at(0, 9.5), None);
        assert_eq!(t.time_in(0, HostState::Computing), 7.0);
    }

    #[test]
    fn rejects_gaps_and_overlaps() {
        let p = PowerModel::default();
        let mut gap = StateTimeline::new(1);
        gap.hosts[0] = vec![
            StateInterval { start: 0.0, end: 1.0, state: HostState::Computing },
            StateInterval { start: 2.0, end: 3.0, state: HostState::Computing },
        ];
        gap.makespan = 3.0;
        assert!(matches!(integrate_timeline(&gap, &p), Err(Error::MalformedTimeline { host: 0, .. })));
        let mut overlap = gap.clone();
        overlap.hosts[0][1].start = 0.5;
        assert!(integrate_timeline(&overlap, &p).is_err());
        let mut short = single(&[(0.0, 1.0, HostState::Computing)]);
        short.makespan = 2.0;
        assert!(integrate_timeline(&short, &p).is_err());
    }
}
