//! The unrolled data-flow graph of a 1D three-point stencil.
//!
//! One task is one iteration of one process. Task `(j, i)` for `i > 0` consumes
//! the outputs of `(j - 1, i - 1)`, `(j, i - 1)` and `(j + 1, i - 1)` where those
//! processes exist; iteration 0 tasks have no inputs.

use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::topology::ProcessTopology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TaskId {
    pub process: usize,
    pub iteration: usize,
}

impl TaskId {
    pub const fn new(process: usize, iteration: usize) -> Self {
        TaskId { process, iteration }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.process, self.iteration)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum TaskState {
    #[default]
    Pending,
    Running,
    Done,
    /// Result existed once but was lost or rolled back.
    Discarded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskNode {
    pub id: TaskId,
    pub flops: f64,
    pub state: TaskState,
    /// Number of times this logical task has been computed.
    pub generation: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskGraph {
    topology: ProcessTopology,
    iterations: usize,
    checkpoint_interval: usize,
    nodes: Vec<TaskNode>,
}

/// Builds the `n x iterations` stencil DAG. Only [`ProcessTopology::Line1D`] is accepted.
pub fn build_task_graph(
    topology: ProcessTopology,
    iterations: usize,
    checkpoint_interval: usize,
    flops_per_task: f64,
) -> Result<TaskGraph> {
    let n = match topology {
        ProcessTopology::Line1D { n } => n,
        other => return Err(Error::UnsupportedDimensionality(other.to_string())),
    };
    if n == 0 {
        return Err(Error::InvalidTopology("empty topology".into()));
    }
    if iterations == 0 {
        return Err(Error::InvalidParameter("iterations must be at least 1".into()));
    }
    if checkpoint_interval == 0 {
        return Err(Error::InvalidParameter("checkpoint interval must be at least 1".into()));
    }
    if !(flops_per_task >= 0.0 && flops_per_task.is_finite()) {
        return Err(Error::InvalidParameter(format!("flops per task must be finite and non-negative, got {flops_per_task}")));
    }
    let mut nodes = Vec::with_capacity(n * iterations);
    for process in 0..n {
        for iteration in 0..iterations {
            nodes.push(TaskNode {
                id: TaskId::new(process, iteration),
                flops: flops_per_task,
                state: TaskState::Pending,
                generation: 0,
            });
        }
    }
    Ok(TaskGraph { topology, iterations, checkpoint_interval, nodes })
}

impl TaskGraph {
    pub fn topology(&self) -> ProcessTopology {
        self.topology
    }

    pub fn processes(&self) -> usize {
        self.topology.len()
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn checkpoint_interval(&self) -> usize {
        self.checkpoint_interval
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, id: TaskId) -> bool {
        id.process < self.processes() && id.iteration < self.iterations
    }

    /// Dense index of a task, process-major.
    pub fn index(&self, id: TaskId) -> usize {
        debug_assert!(self.contains(id));
        id.process * self.iterations + id.iteration
    }

    pub fn node(&self, id: TaskId) -> Option<&TaskNode> {
        self.contains(id).then(|| &self.nodes[self.index(id)])
    }

    pub fn nodes(&self) -> &[TaskNode] {
        &self.nodes
    }

    pub(crate) fn nodes_mut(&mut self) -> &mut [TaskNode] {
        &mut self.nodes
    }

    /// Stencil processes of `process` including itself, ascending.
    pub fn stencil(&self, process: usize) -> SmallVec<[usize; 3]> {
        let n = self.processes();
        let lo = process.saturating_sub(1);
        let hi = (process + 1).min(n - 1);
        (lo..=hi).collect()
    }

    /// Inputs of a task; empty for iteration 0.
    pub fn inputs(&self, id: TaskId) -> SmallVec<[TaskId; 3]> {
        if id.iteration == 0 {
            return SmallVec::new();
        }
        self.stencil(id.process).into_iter().map(|p| TaskId::new(p, id.iteration - 1)).collect()
    }

    /// Consumers of a task's output; empty for the last iteration.
    pub fn consumers(&self, id: TaskId) -> SmallVec<[TaskId; 3]> {
        if id.iteration + 1 >= self.iterations {
            return SmallVec::new();
        }
        self.stencil(id.process).into_iter().map(|p| TaskId::new(p, id.iteration + 1)).collect()
    }

    pub fn is_checkpoint_iteration(&self, iteration: usize) -> bool {
        iteration.is_multiple_of(self.checkpoint_interval)
    }
}
