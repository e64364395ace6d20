//! Run results and the per-failure recovery log.

use serde::{Deserialize, Serialize};

use crate::energy::project_savings;
use crate::strategy::Strategy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub strategy: Strategy,
    pub seed: u64,
    pub makespan: f64,
    /// Task executions beyond one per logical task.
    pub recomputed_tasks: u64,
    pub failures_fired: usize,
    pub per_host_energy: Vec<f64>,
    pub total_energy: f64,
    /// Energy not spent on recomputation compared to a reference run.
    pub projected_savings: f64,
    /// Host-seconds spent in each power state, in [`HostState::ALL`](crate::platform::HostState::ALL) order.
    pub state_seconds: [f64; 4],
}

impl RunMetrics {
    /// Sets `projected_savings` from the recompute count of a reference run on the same trace.
    pub fn project_against(&mut self, reference_recomputed: u64, joules_per_task: f64) {
        let delta = reference_recomputed as f64 - self.recomputed_tasks as f64;
        self.projected_savings = project_savings(delta, joules_per_task);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub host: usize,
    pub scheduled_time: f64,
    pub fired_time: f64,
    pub deferred: bool,
    pub failed_iter: usize,
    /// Checkpoint iteration recovery started from; `None` is the initial state.
    pub base: Option<usize>,
    pub d: usize,
    pub planned_recompute: usize,
    pub participants: Vec<usize>,
    pub recovery_end: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunLog {
    pub failures: Vec<FailureRecord>,
}

impl RunLog {
    /// Recovery windows as `(start, end)`.
    pub fn windows(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.failures.iter().map(|f| (f.fired_time, f.recovery_end))
    }
}
