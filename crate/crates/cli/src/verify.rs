//! `verify-jacobi`: fault-free, global and data-flow runs must agree bit for bit.

use dfrsim_core::jacobi::{verify_consistency, FaultSpec, JacobiConfig, JacobiOptions, JacobiReport, JacobiStrategy};
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct StrategyVerdict {
    pub strategy: JacobiStrategy,
    pub passed: bool,
    pub history_matches: bool,
    pub final_grid_matches: bool,
    pub participants: Vec<usize>,
    pub recomputed_rank_iterations: u64,
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Verification {
    pub config: JacobiConfig,
    pub fault: FaultSpec,
    pub reference_history: Vec<f64>,
    pub verdicts: Vec<StrategyVerdict>,
}

impl Verification {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }
}

pub fn verify(
    config: &JacobiConfig,
    fault: FaultSpec,
    strategies: &[JacobiStrategy],
    options: &JacobiOptions,
) -> Result<Verification, CliError> {
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    if fault.victim >= config.ranks() || fault.fail_at_iteration > config.max_iters {
        return Err(CliError::Config(format!(
            "victim {} / fail-at {} out of range for {} ranks and {} iterations",
            fault.victim,
            fault.fail_at_iteration,
            config.ranks(),
            config.max_iters
        )));
    }
    let (reference, results) =
        verify_consistency(config, fault, strategies, options).map_err(|e| CliError::Runtime(e.to_string()))?;
    let verdicts = results
        .into_iter()
        .map(|c| {
            let JacobiReport { history, recovery, .. } = &c.report;
            StrategyVerdict {
                strategy: c.strategy,
                passed: c.passed(),
                history_matches: c.history_matches,
                final_grid_matches: c.final_grid_matches,
                participants: recovery.as_ref().map(|r| r.participants.clone()).unwrap_or_default(),
                recomputed_rank_iterations: recovery.as_ref().map_or(0, |r| r.recomputed_rank_iterations),
                history: history.clone(),
            }
        })
        .collect();
    Ok(Verification { config: *config, fault, reference_history: reference.history, verdicts })
}

/// Human-readable verdict.
pub fn render(v: &Verification) -> String {
    let mut out = String::new();
    out.push_str("iteration  summed_squares\n");
    for (k, s) in v.reference_history.iter().enumerate() {
        out.push_str(&format!("{k:>9}  {s:.17e}\n"));
    }
    for verdict in &v.verdicts {
        out.push_str(&format!(
            "{:?}: {} (history {}, final grid {}, participants {:?}, recomputed rank-iterations {})\n",
            verdict.strategy,
            if verdict.passed { "PASS" } else { "FAIL" },
            if verdict.history_matches { "identical" } else { "differs" },
            if verdict.final_grid_matches { "identical" } else { "differs" },
            verdict.participants,
            verdict.recomputed_rank_iterations,
        ));
    }
    out
}
