//! `simulate` and `sweep`: every (n, seed) pair runs each strategy on one shared trace.

use std::collections::BTreeMap;

use dfrsim_core::engine::{run_simulation, FailureRecord, RunMetrics};
use dfrsim_core::failure::{generate_trace, FailureTrace, PRNG_IDENTITY};
use dfrsim_core::stats::{mean, polyfit, slope_test, PolyFit, SlopeTest};
use dfrsim_core::strategy::Strategy;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::output::SCHEMA_VERSION;
use crate::CliError;

/// One CSV line. Column order is part of the output schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub strategy: String,
    pub n: usize,
    pub seed: u64,
    pub failures_fired: usize,
    pub recomputed_tasks: u64,
    pub makespan_s: f64,
    #[serde(rename = "total_energy_J")]
    pub total_energy_j: f64,
    #[serde(rename = "projected_savings_J")]
    pub projected_savings_j: f64,
    pub config_hash: String,
}

/// Everything kept from one run, for the CSV row and the JSON trace.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub row: ResultRow,
    pub metrics: RunMetrics,
    pub failures: Vec<FailureRecord>,
    pub trace: FailureTrace,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceFile<'a> {
    pub schema_version: u32,
    pub config_hash: &'a str,
    pub prng: &'a str,
    pub strategy: &'a str,
    pub n: usize,
    pub seed: u64,
    pub failure_trace: &'a FailureTrace,
    pub metrics: &'a RunMetrics,
    pub failures: &'a [FailureRecord],
}

impl RunRecord {
    pub fn trace_file(&self) -> TraceFile<'_> {
        TraceFile {
            schema_version: SCHEMA_VERSION,
            config_hash: &self.row.config_hash,
            prng: PRNG_IDENTITY,
            strategy: &self.row.strategy,
            n: self.row.n,
            seed: self.row.seed,
            failure_trace: &self.trace,
            metrics: &self.metrics,
            failures: &self.failures,
        }
    }
}

/// Runs the requested strategies for one `(n, seed)`; global also runs as the
/// savings reference when it was not requested.
fn run_point(cfg: &RunConfig, n: usize, seed: u64, strategies: &[Strategy], hash: &str) -> Result<Vec<RunRecord>, CliError> {
    let graph = cfg.graph(n)?;
    let platform = cfg.platform(n)?;
    let trace = generate_trace(seed, n, cfg.node_mtbf.0, cfg.horizon()?).map_err(|e| CliError::Config(e.to_string()))?;
    let options = cfg.options();
    let run = |s: Strategy| run_simulation(&graph, &platform, &trace, s, &options).map_err(|e| CliError::Runtime(format!("{s} n={n} seed={seed}: {e}")));
    let mut outputs = Vec::with_capacity(strategies.len());
    for &s in strategies {
        outputs.push(run(s)?);
    }
    let reference = match outputs.iter().find(|o| o.metrics.strategy == Strategy::Global) {
        Some(o) => o.metrics.recomputed_tasks,
        None => run(Strategy::Global)?.metrics.recomputed_tasks,
    };
    Ok(outputs
        .into_iter()
        .map(|mut o| {
            o.metrics.project_against(reference, cfg.joules_per_task);
            let m = &o.metrics;
            RunRecord {
                row: ResultRow {
                    strategy: m.strategy.tag().to_string(),
                    n,
                    seed,
                    failures_fired: m.failures_fired,
                    recomputed_tasks: m.recomputed_tasks,
                    makespan_s: m.makespan,
                    total_energy_j: m.total_energy,
                    projected_savings_j: m.projected_savings,
                    config_hash: hash.to_string(),
                },
                metrics: o.metrics,
                failures: o.log.failures,
                trace: trace.clone(),
            }
        })
        .collect())
}

/// All runs for the given process counts, ordered by `(n, seed, strategy)`.
pub fn run_grid(cfg: &RunConfig, ns: &[usize]) -> Result<Vec<RunRecord>, CliError> {
    cfg.validate()?;
    let strategies = cfg.parsed_strategies()?;
    let hash = cfg.hash();
    let jobs: Vec<(usize, u64)> = ns.iter().flat_map(|&n| cfg.seeds.iter().map(move |&s| (n, s))).collect();
    let per_job: Vec<Vec<RunRecord>> =
        jobs.par_iter().map(|&(n, seed)| run_point(cfg, n, seed, &strategies, &hash)).collect::<Result<_, _>>()?;
    Ok(per_job.into_iter().flatten().collect())
}

pub fn simulate(cfg: &RunConfig) -> Result<Vec<RunRecord>, CliError> {
    run_grid(cfg, &[cfg.n])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub strategy: String,
    pub n: usize,
    pub runs: usize,
    pub mean_failures_fired: f64,
    pub mean_recomputed_tasks: f64,
    /// Mean over runs with at least one failure; empty when there were none.
    pub mean_recomputed_per_failure: Option<f64>,
    pub mean_makespan_s: f64,
    #[serde(rename = "mean_total_energy_J")]
    pub mean_total_energy_j: f64,
    #[serde(rename = "mean_projected_savings_J")]
    pub mean_projected_savings_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingsFit {
    pub strategy: String,
    pub degree1: PolyFit,
    pub degree2: PolyFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerFailureSlope {
    pub strategy: String,
    /// Runs with at least one failure, one point each.
    pub points: usize,
    pub test: Option<SlopeTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub ns: Vec<usize>,
    pub summary: Vec<SummaryRow>,
    /// Projected savings means against n, per non-global strategy.
    pub savings_fits: Vec<SavingsFit>,
    /// Recomputed tasks per failure against n, per strategy.
    pub per_failure_slopes: Vec<PerFailureSlope>,
}

fn summarise(strategy: &str, n: usize, rows: &[&ResultRow]) -> SummaryRow {
    let col = |f: fn(&ResultRow) -> f64| mean(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
    let per_failure: Vec<f64> = rows
        .iter()
        .filter(|r| r.failures_fired > 0)
        .map(|r| r.recomputed_tasks as f64 / r.failures_fired as f64)
        .collect();
    SummaryRow {
        strategy: strategy.to_string(),
        n,
        runs: rows.len(),
        mean_failures_fired: col(|r| r.failures_fired as f64),
        mean_recomputed_tasks: col(|r| r.recomputed_tasks as f64),
        mean_recomputed_per_failure: (!per_failure.is_empty()).then(|| mean(&per_failure)),
        mean_makespan_s: col(|r| r.makespan_s),
        mean_total_energy_j: col(|r| r.total_energy_j),
        mean_projected_savings_j: col(|r| r.projected_savings_j),
    }
}

/// Aggregates sweep rows. Needs at least three distinct process counts.
pub fn analyse(rows: &[ResultRow], config_hash: &str) -> Result<SweepReport, CliError> {
    let mut groups: BTreeMap<(String, usize), Vec<&ResultRow>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for r in rows {
        if !order.contains(&r.strategy) {
            order.push(r.strategy.clone());
        }
        groups.entry((r.strategy.clone(), r.n)).or_default().push(r);
    }
    let mut ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    if ns.len() < 3 {
        return Err(CliError::Config(format!("a sweep needs at least 3 distinct n values for the fits, got {}", ns.len())));
    }
    let mut summary = Vec::new();
    let mut savings_fits = Vec::new();
    let mut per_failure_slopes = Vec::new();
    let runtime = |e: dfrsim_core::error::Error| CliError::Runtime(e.to_string());
    for s in &order {
        let rows_of: Vec<SummaryRow> =
            ns.iter().filter_map(|&n| groups.get(&(s.clone(), n)).map(|g| summarise(s, n, g))).collect();
        if s != Strategy::Global.tag() && rows_of.len() >= 3 {
            let xs: Vec<f64> = rows_of.iter().map(|r| r.n as f64).collect();
            let ys: Vec<f64> = rows_of.iter().map(|r| r.mean_projected_savings_j).collect();
            savings_fits.push(SavingsFit {
                strategy: s.clone(),
                degree1: polyfit(&xs, &ys, 1).map_err(runtime)?,
                degree2: polyfit(&xs, &ys, 2).map_err(runtime)?,
            });
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter(|r| &r.strategy == s && r.failures_fired > 0)
            .map(|r| (r.n as f64, r.recomputed_tasks as f64 / r.failures_fired as f64))
            .unzip();
        per_failure_slopes.push(PerFailureSlope { strategy: s.clone(), points: xs.len(), test: slope_test(&xs, &ys).ok() });
        summary.extend(rows_of);
    }
    Ok(SweepReport { schema_version: SCHEMA_VERSION, config_hash: config_hash.to_string(), ns, summary, savings_fits, per_failure_slopes })
}

pub fn sweep(cfg: &RunConfig) -> Result<(Vec<RunRecord>, SweepReport), CliError> {
    let mut ns = cfg.sweep_n.clone();
    ns.sort_unstable();
    ns.dedup();
    if ns.len() < 3 {
        return Err(CliError::Config(format!("sweep_n needs at least 3 distinct values, got {:?}", cfg.sweep_n)));
    }
    let records = run_grid(cfg, &ns)?;
    let rows: Vec<ResultRow> = records.iter().map(|r| r.row.clone()).collect();
    let report = analyse(&rows, &cfg.hash())?;
    Ok((records, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(strategy: &str, n: usize, seed: u64, failures: usize, recomputed: u64, savings: f64) -> ResultRow {
        ResultRow {
            strategy: strategy.into(),
            n,
            seed,
            failures_fired: failures,
            recomputed_tasks: recomputed,
            makespan_s: 100.0,
            total_energy_j: 1.0,
            projected_savings_j: savings,
            config_hash: "h".into(),
        }
    }

    #[test]
    fn analysis_fits_the_means() {
        let mut rows = Vec::new();
        for n in [10usize, 20, 40, 80] {
            let x = n as f64;
            for seed in 0..2 {
                rows.push(row("global", n, seed, 2, 5 * n as u64, 0.0));
                // Seeds straddle the exact quadratic by +-1.
                let noise = if seed == 0 { 1.0 } else { -1.0 };
                rows.push(row("dfr-min", n, seed, 2, 6, 3.0 * x * x + noise));
            }
        }
        let report = analyse(&rows, "h").unwrap();
        assert_eq!(report.ns, vec![10, 20, 40, 80]);
        assert_eq!(report.summary.len(), 8);
        let fit = &report.savings_fits[0];
        assert_eq!(fit.strategy, "dfr-min");
        assert!((fit.degree2.coefficients[2] - 3.0).abs() < 1e-9);
        assert!(fit.degree2.sse < 1e-12 * fit.degree1.sse);
        let slope = report.per_failure_slopes.iter().find(|s| s.strategy == "dfr-min").unwrap();
        assert_eq!(slope.points, 8);
        assert_eq!(slope.test.unwrap().slope, 0.0);
    }

    #[test]
    fn too_few_points() {
        let rows = vec![row("global", 10, 0, 1, 5, 0.0), row("global", 20, 0, 1, 5, 0.0)];
        assert!(matches!(analyse(&rows, "h"), Err(CliError::Config(_))));
        let cfg = RunConfig { sweep_n: vec![20, 20, 40], ..RunConfig::default() };
        assert!(matches!(sweep(&cfg), Err(CliError::Config(_))));
    }

    #[test]
    fn per_failure_mean_skips_quiet_runs() {
        let a = row("log", 10, 0, 0, 0, 0.0);
        let b = row("log", 10, 1, 2, 6, 0.0);
        let s = summarise("log", 10, &[&a, &b]);
        assert_eq!(s.mean_recomputed_per_failure, Some(3.0));
        assert_eq!(s.mean_recomputed_tasks, 3.0);
        assert_eq!(summarise("log", 10, &[&a]).mean_recomputed_per_failure, None);
    }

    #[test]
    fn small_grid_is_ordered_and_referenced() {
        let cfg = RunConfig {
            n: 12,
            iterations: 30,
            node_mtbf: crate::config::Duration(600.0),
            seeds: vec![3, 1],
            strategies: vec!["log".into(), "dfr-min".into()],
            ..RunConfig::default()
        };
        let records = simulate(&cfg).unwrap();
        let keys: Vec<(u64, &str)> = records.iter().map(|r| (r.row.seed, r.row.strategy.as_str())).collect();
        assert_eq!(keys, vec![(3, "log"), (3, "dfr-min"), (1, "log"), (1, "dfr-min")]);
        for r in &records {
            assert!(r.row.failures_fired > 0);
            assert!(r.row.projected_savings_j > 0.0, "{:?}", r.row);
            assert_eq!(r.row.projected_savings_j % 500.0, 0.0);
        }
    }
}
