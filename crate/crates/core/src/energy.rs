//! Analytic energy-savings model for localised rollback.
//!
//! After a failure `i` iterations past the last checkpoint, data-flow rollback
//! needs `p_neigh(i)` neighbours besides the replacement. Averaged over a
//! checkpoint interval this gives `p_active`; everyone else can idle at a
//! lower frequency. Multiplying the idle count by the per-phase saving and the
//! system failure rate `n / mu` gives the average saving in watts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-iteration saving assumed by the closed-form estimate: 10 W over a 4 s
/// iteration, halved for the average rollback length.
pub const JACOBI_JOULES_PER_ITERATION: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: f64,
    /// Per-node MTBF in seconds.
    pub mu: f64,
    pub c_it: usize,
    pub iter_seconds: f64,
    pub delta_power: f64,
    pub dim: u8,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.n >= 1.0 && self.mu > 0.0 && self.c_it >= 1 && self.iter_seconds >= 0.0 && self.delta_power >= 0.0) {
            return Err(Error::InvalidParameter(format!("invalid model parameters: {self:?}")));
        }
        if !(self.dim == 1 || self.dim == 2) {
            return Err(Error::UnsupportedDimensionality(format!("{}D", self.dim)));
        }
        Ok(())
    }

    pub fn p_active(&self) -> f64 {
        p_active(self.c_it, self.dim)
    }

    pub fn p_idle(&self) -> f64 {
        p_idle(self.n, self.c_it, self.dim)
    }

    pub fn c_e(&self) -> f64 {
        c_e(self.delta_power, self.iter_seconds, self.c_it)
    }

    pub fn savings_rate(&self) -> f64 {
        savings_rate(self.n, self.mu, self.p_idle(), self.c_e())
    }
}

/// Neighbours taking part in recovery `i` iterations after a checkpoint.
pub fn p_neigh(i: usize, dim: u8) -> f64 {
    let line = 2.0 * i.saturating_sub(1) as f64;
    if dim == 2 {
        line * line
    } else {
        line
    }
}

/// Mean of `p_neigh(i)` over `i = 1..=c_it`.
pub fn p_active(c_it: usize, dim: u8) -> f64 {
    if c_it == 0 {
        return 0.0;
    }
    (1..=c_it).map(|i| p_neigh(i, dim)).sum::<f64>() / c_it as f64
}

pub fn p_idle(n: f64, c_it: usize, dim: u8) -> f64 {
    (n - p_active(c_it, dim)).max(0.0)
}

/// Energy saved by one idle process over an average recovery phase.
pub fn c_e(delta_power: f64, iter_seconds: f64, c_it: usize) -> f64 {
    delta_power * iter_seconds * c_it as f64 / 2.0
}

/// Average saving in watts for the whole system.
pub fn savings_rate(n: f64, mu: f64, p_idle: f64, c_e: f64) -> f64 {
    n / mu * p_idle * c_e
}

/// Quadratic approximation `n^2 / mu * 20 * c_it`, in watts.
pub fn e_jacobi(n: f64, mu: f64, c_it: usize) -> f64 {
    n * n / mu * JACOBI_JOULES_PER_ITERATION * c_it as f64
}

/// Energy saved by not recomputing `delta_tasks` tasks.
pub fn project_savings(delta_tasks: f64, joules_per_task: f64) -> f64 {
    delta_tasks * joules_per_task
}
