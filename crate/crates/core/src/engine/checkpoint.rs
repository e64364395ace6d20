//! Buddy checkpoint bookkeeping.
//!
//! Only iteration numbers are tracked; the data itself is not simulated. A
//! process keeps every checkpoint back to the last globally consistent one,
//! so any of them can be reloaded.

use serde::{Deserialize, Serialize};

/// Partner storing the checkpoint of `p`. Pairs `(2k, 2k + 1)`; with an odd
/// count the last process uses its left neighbour, and a lone process is its
/// own buddy.
pub fn buddy_of(p: usize, n: usize) -> usize {
    if n == 1 {
        p
    } else if p ^ 1 < n {
        p ^ 1
    } else {
        p - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointStore {
    buddy: Vec<usize>,
    last: Vec<Option<usize>>,
    pub size_bytes: u64,
}

impl CheckpointStore {
    pub fn new(n: usize, size_bytes: u64) -> Self {
        CheckpointStore { buddy: (0..n).map(|p| buddy_of(p, n)).collect(), last: vec![None; n], size_bytes }
    }

    pub fn buddy(&self, p: usize) -> usize {
        self.buddy[p]
    }

    /// Iteration of the newest committed checkpoint of `p`.
    pub fn last(&self, p: usize) -> Option<usize> {
        self.last[p]
    }

    pub fn commit(&mut self, p: usize, iteration: usize) {
        if self.last[p].is_none_or(|c| c < iteration) {
            self.last[p] = Some(iteration);
        }
    }

    /// Newest iteration every process has committed.
    pub fn global_consistent(&self) -> Option<usize> {
        self.last.iter().copied().min().flatten()
    }

    /// Whether `p` still holds a checkpoint of `iteration`.
    pub fn holds(&self, p: usize, iteration: usize) -> bool {
        self.last[p].is_some_and(|c| c >= iteration) && self.global_consistent().is_none_or(|g| iteration >= g)
    }

    pub fn rollback_all(&mut self, to: Option<usize>) {
        for last in &mut self.last {
            *last = to;
        }
    }
}
