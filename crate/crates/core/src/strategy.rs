//! Rollback planners.
//!
//! A planner turns one failure (process `j`, distance `d` from the checkpoint
//! base to the failed iteration) into a [`RecoveryPlan`]. Iterations are
//! counted from the checkpoint base: with the checkpoint taken after iteration
//! `c`, recovery recomputes iterations `c + 1 .. c + d - 1` and everyone
//! rejoins at `c + d`, which is then executed as ordinary work. A failure
//! before the first checkpoint commits uses the initial state as base (`None`),
//! in which case iterations `0 .. d - 1` are recomputed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{TaskGraph, TaskId};
use crate::topology::ProcessTopology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DfrVariant {
    /// Shrinking cone: step `m` recomputes partitions within `d - 1 - m`.
    Minimal,
    /// Every participant recomputes every step.
    Rectangular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    Global,
    Dfr(DfrVariant),
    LogBased,
}

impl Strategy {
    pub const ALL: [Strategy; 4] =
        [Strategy::Global, Strategy::Dfr(DfrVariant::Rectangular), Strategy::Dfr(DfrVariant::Minimal), Strategy::LogBased];

    pub fn tag(self) -> &'static str {
        match self {
            Strategy::Global => "global",
            Strategy::Dfr(DfrVariant::Minimal) => "dfr-min",
            Strategy::Dfr(DfrVariant::Rectangular) => "dfr-rect",
            Strategy::LogBased => "log",
        }
    }

    /// Whether all processes roll back to a common checkpoint.
    pub fn is_global(self) -> bool {
        matches!(self, Strategy::Global)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "global" => Ok(Strategy::Global),
            "dfr-min" | "dfr" | "dfr-minimal" => Ok(Strategy::Dfr(DfrVariant::Minimal)),
            "dfr-rect" | "dfr-rectangular" => Ok(Strategy::Dfr(DfrVariant::Rectangular)),
            "log" | "log-based" | "logbased" => Ok(Strategy::LogBased),
            other => Err(Error::InvalidParameter(format!(
                "unknown strategy '{other}', expected one of global, dfr-min, dfr-rect, log"
            ))),
        }
    }
}

/// Where a recomputed task gets one of its inputs from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputSource {
    /// Produced by another task of the same plan.
    Recomputed(TaskId),
    /// The checkpoint reloaded by a participant.
    Checkpoint(usize),
    /// Replayed from a message log at no cost.
    Logged,
    /// Not recomputed and not in any checkpoint; the task runs on a stale
    /// value, which is harmless because its result is thrown away.
    Frozen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryPlan {
    pub strategy: Strategy,
    pub failed: usize,
    /// Iteration of the checkpoint recovery starts from; `None` is the initial state.
    pub base: Option<usize>,
    pub rejoin_iteration: usize,
    /// Sorted by `(process, iteration)`.
    pub recompute: Vec<TaskId>,
    /// Processes that reload a checkpoint and take part in recovery, ascending.
    pub participants: Vec<usize>,
    /// Everyone else, ascending.
    pub idle: Vec<usize>,
}

/// First iteration recomputed after rolling back to `base`.
pub fn first_iteration(base: Option<usize>) -> usize {
    base.map_or(0, |c| c + 1)
}

/// Distance from the checkpoint base to the failed iteration.
pub fn rollback_distance(base: Option<usize>, failed_iter: usize) -> usize {
    match base {
        Some(c) => failed_iter.saturating_sub(c),
        None => failed_iter + 1,
    }
}

impl RecoveryPlan {
    pub fn d(&self) -> usize {
        self.rejoin_iteration - first_iteration(self.base) + 1
    }

    pub fn contains(&self, task: TaskId) -> bool {
        self.recompute.binary_search(&task).is_ok()
    }

    pub fn is_participant(&self, process: usize) -> bool {
        self.participants.binary_search(&process).is_ok()
    }

    /// Whether the result of a recomputed task replaces the stored one. Global
    /// rollback keeps everything; localised strategies keep only the failed
    /// process's results and discard duplicates.
    pub fn keeps(&self, task: TaskId) -> bool {
        self.contains(task) && (self.strategy.is_global() || task.process == self.failed)
    }

    /// Recomputed tasks in an order that respects their dependencies.
    pub fn in_dependency_order(&self) -> Vec<TaskId> {
        let mut out = self.recompute.clone();
        out.sort_by_key(|t| (t.iteration, t.process));
        out
    }

    /// Source of the input that `task` (which must be in the plan) reads from process `from`.
    pub fn input_source(&self, task: TaskId, from: usize) -> InputSource {
        debug_assert!(task.iteration > 0);
        let prev = TaskId::new(from, task.iteration - 1);
        if self.contains(prev) {
            InputSource::Recomputed(prev)
        } else if Some(prev.iteration) == self.base && self.is_participant(from) {
            InputSource::Checkpoint(from)
        } else if self.strategy == Strategy::LogBased {
            InputSource::Logged
        } else {
            InputSource::Frozen
        }
    }

    /// Checks that the plan only names tasks and processes of `graph`.
    pub fn validate(&self, graph: &TaskGraph) -> Result<()> {
        let n = graph.processes();
        if self.failed >= n {
            return Err(Error::InvalidPlan(format!("failed process {} outside 0..{n}", self.failed)));
        }
        if let Some(&p) = self.participants.iter().chain(&self.idle).find(|&&p| p >= n) {
            return Err(Error::InvalidPlan(format!("process {p} outside 0..{n}")));
        }
        if self.participants.len() + self.idle.len() != n || self.participants.iter().any(|p| self.idle.contains(p)) {
            return Err(Error::InvalidPlan("participants and idle must partition the processes".into()));
        }
        if !self.is_participant(self.failed) {
            return Err(Error::InvalidPlan("the failed process must participate".into()));
        }
        if self.rejoin_iteration > graph.iterations() {
            return Err(Error::InvalidPlan(format!("rejoin iteration {} beyond the run", self.rejoin_iteration)));
        }
        let first = first_iteration(self.base);
        for &task in &self.recompute {
            if !graph.contains(task) {
                return Err(Error::PlanTaskOutOfGraph { task });
            }
            if task.iteration < first || task.iteration >= self.rejoin_iteration {
                return Err(Error::InvalidPlan(format!("task {task} outside the rollback window")));
            }
            if !self.is_participant(task.process) {
                return Err(Error::InvalidPlan(format!("task {task} on a non-participant")));
            }
        }
        Ok(())
    }
}

fn finish(
    strategy: Strategy,
    j: usize,
    d: usize,
    n: usize,
    base: Option<usize>,
    mut recompute: Vec<TaskId>,
    participants: Vec<usize>,
) -> RecoveryPlan {
    recompute.sort_unstable();
    let idle = (0..n).filter(|p| participants.binary_search(p).is_err()).collect();
    let first = first_iteration(base);
    RecoveryPlan {
        strategy,
        failed: j,
        base,
        rejoin_iteration: first + d.saturating_sub(1),
        recompute,
        participants,
        idle,
    }
}

fn check_process(j: usize, n: usize) -> Result<()> {
    if j >= n {
        Err(Error::ProcessOutOfRange { index: j, n })
    } else {
        Ok(())
    }
}

/// Everyone rolls back to `base` and recomputes `d - 1` iterations.
pub fn plan_global(j: usize, d: usize, n: usize, base: Option<usize>) -> Result<RecoveryPlan> {
    check_process(j, n)?;
    let first = first_iteration(base);
    let steps = d.saturating_sub(1);
    let recompute = (0..n).flat_map(|p| (first..first + steps).map(move |i| TaskId::new(p, i))).collect();
    Ok(finish(Strategy::Global, j, d, n, base, recompute, (0..n).collect()))
}

/// Data-flow rollback on a line: processes within distance `< d` of `j` reload
/// their checkpoints; the variant decides how much each of them recomputes.
pub fn plan_dfr(
    j: usize,
    d: usize,
    topology: &ProcessTopology,
    base: Option<usize>,
    variant: DfrVariant,
) -> Result<RecoveryPlan> {
    let n = match *topology {
        ProcessTopology::Line1D { n } => n,
        other => return Err(Error::UnsupportedDimensionality(other.to_string())),
    };
    check_process(j, n)?;
    let first = first_iteration(base);
    let participants = if d <= 1 { vec![j] } else { topology.within(j, d)? };
    let mut recompute = Vec::new();
    for m in 1..d {
        let radius = match variant {
            DfrVariant::Rectangular => d - 1,
            DfrVariant::Minimal => d - 1 - m,
        };
        let lo = j.saturating_sub(radius);
        let hi = (j + radius).min(n - 1);
        recompute.extend((lo..=hi).map(|p| TaskId::new(p, first + m - 1)));
    }
    Ok(finish(Strategy::Dfr(variant), j, d, n, base, recompute, participants))
}

/// Only the replacement replays its lost iterations; inputs come from logs.
pub fn plan_logbased(j: usize, d: usize, n: usize, base: Option<usize>) -> Result<RecoveryPlan> {
    check_process(j, n)?;
    let first = first_iteration(base);
    let recompute = (first..first + d.saturating_sub(1)).map(|i| TaskId::new(j, i)).collect();
    Ok(finish(Strategy::LogBased, j, d, n, base, recompute, vec![j]))
}

pub fn plan(
    strategy: Strategy,
    j: usize,
    d: usize,
    topology: &ProcessTopology,
    base: Option<usize>,
) -> Result<RecoveryPlan> {
    match strategy {
        Strategy::Global => plan_global(j, d, topology.len(), base),
        Strategy::Dfr(variant) => plan_dfr(j, d, topology, base, variant),
        Strategy::LogBased => plan_logbased(j, d, topology.len(), base),
    }
}

/// Width of the line segment `[j - r, j + r]` clipped to `0..n`.
fn clipped_width(j: usize, r: usize, n: usize) -> usize {
    j.min(r) + (n - 1 - j).min(r) + 1
}

/// Recompute counts written out directly, boundary clipping included.
pub fn recompute_count_closed_form(strategy: Strategy, n: usize, d: usize, j: usize) -> usize {
    let steps = d.saturating_sub(1);
    match strategy {
        Strategy::Global => n * steps,
        Strategy::LogBased => steps,
        Strategy::Dfr(DfrVariant::Rectangular) => steps * clipped_width(j, steps, n),
        Strategy::Dfr(DfrVariant::Minimal) => (0..steps).map(|r| clipped_width(j, r, n)).sum(),
    }
}
