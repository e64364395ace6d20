use thiserror::Error;

use crate::graph::TaskId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("process index {index} out of range for {n} processes")]
    ProcessOutOfRange { index: usize, n: usize },
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("simulation supports only one-dimensional topologies, got {0}")]
    UnsupportedDimensionality(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid recovery plan: task {task} is outside the graph")]
    PlanTaskOutOfGraph { task: TaskId },
    #[error("invalid recovery plan: {0}")]
    InvalidPlan(String),
    #[error("malformed timeline for host {host}: {reason}")]
    MalformedTimeline { host: usize, reason: String },
    #[error("{0}")]
    Unsupported(String),
}
