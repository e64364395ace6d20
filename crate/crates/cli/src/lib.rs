//! Command-line front end: `simulate`, `sweep`, `model` and `verify-jacobi`.

pub mod config;
pub mod experiment;
pub mod model;
pub mod output;
pub mod verify;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use dfrsim_core::jacobi::{FaultSpec, JacobiConfig, JacobiOptions, JacobiStrategy};

use config::{parse_seeds, Duration, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("verification failed: {0}")]
    Verify(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Verify(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dfrsim", version, about = "Rollback-recovery simulator for iterative stencils")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every strategy and seed for one process count.
    Simulate(ConfigArgs),
    /// Run several process counts and fit the projected savings.
    Sweep(ConfigArgs),
    /// Tabulate the analytic savings model.
    Model(ModelArgs),
    /// Check that rollback reproduces the fault-free Jacobi solve exactly.
    VerifyJacobi(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in parameter set applied before the file.
    #[arg(long, value_parser = ["desk", "paper"])]
    pub preset: Option<String>,
    /// `key=value` override; repeatable, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma-separated process counts for `sweep`.
    #[arg(long, value_delimiter = ',')]
    pub sweep_n: Option<Vec<usize>>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub checkpoint_interval: Option<usize>,
    /// Per-node MTBF, e.g. `100h` or `64000s`.
    #[arg(long)]
    pub mtbf: Option<String>,
    /// `0..10` or `1,2,3`.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Comma-separated strategy tags.
    #[arg(long, value_delimiter = ',')]
    pub strategies: Option<Vec<String>>,
    /// Results CSV path.
    #[arg(long)]
    pub out: Option<String>,
    /// Directory for per-run JSON traces.
    #[arg(long)]
    pub trace_dir: Option<String>,
    /// Skip the per-run JSON traces.
    #[arg(long)]
    pub no_traces: bool,
    #[arg(long)]
    pub no_frequency_scaling: bool,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut sets = self.overrides.clone();
        let quoted = |s: &str| toml::Value::String(s.to_string()).to_string();
        if let Some(n) = self.n {
            sets.push(format!("n={n}"));
        }
        if let Some(ns) = &self.sweep_n {
            sets.push(format!("sweep_n={ns:?}"));
        }
        if let Some(v) = self.iterations {
            sets.push(format!("iterations={v}"));
        }
        if let Some(v) = self.checkpoint_interval {
            sets.push(format!("checkpoint_interval={v}"));
        }
        if let Some(m) = &self.mtbf {
            m.parse::<Duration>()?;
            sets.push(format!("node_mtbf={}", quoted(m)));
        }
        if let Some(s) = &self.seeds {
            sets.push(format!("seeds={:?}", parse_seeds(s)?));
        }
        if let Some(s) = &self.strategies {
            let list: Vec<String> = s.iter().map(|t| quoted(t.trim())).collect();
            sets.push(format!("strategies=[{}]", list.join(",")));
        }
        if let Some(o) = &self.out {
            sets.push(format!("output={}", quoted(o)));
        }
        if let Some(d) = &self.trace_dir {
            sets.push(format!("trace_dir={}", quoted(d)));
        }
        if self.no_traces {
            sets.push("trace_dir=\"\"".into());
        }
        if self.no_frequency_scaling {
            sets.push("frequency_scaling=false".into());
        }
        RunConfig::load(self.preset.as_deref(), self.config.as_deref(), &sets)
    }
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Comma-separated process counts.
    #[arg(long, value_delimiter = ',', default_value = "10000,100000")]
    pub n: Vec<f64>,
    /// Per-node MTBF with unit suffix.
    #[arg(long, default_value = "50y")]
    pub mtbf: String,
    #[arg(long, default_value_t = 10)]
    pub c_it: usize,
    #[arg(long, default_value_t = 4.0)]
    pub iter_seconds: f64,
    /// Watts saved per idle process by frequency scaling.
    #[arg(long, default_value_t = 10.0)]
    pub delta_power: f64,
    #[arg(long, default_value_t = 1)]
    pub dim: u8,
    /// Use this idle-process count instead of the computed one.
    #[arg(long)]
    pub p_idle: Option<f64>,
    /// Also write the table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VerifyStrategy {
    Global,
    Dfr,
    Both,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 2)]
    pub rows: usize,
    #[arg(long, default_value_t = 4)]
    pub cols: usize,
    #[arg(long, default_value_t = 100)]
    pub local_n: usize,
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    /// Defaults to `--iters`, i.e. one checkpoint after iteration 0.
    #[arg(long)]
    pub ckpt_interval: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub victim: usize,
    #[arg(long, default_value_t = 3)]
    pub fail_at: usize,
    #[arg(long, value_enum, default_value = "both")]
    pub strategy: VerifyStrategy,
    #[arg(long)]
    pub no_frequency_scaling: bool,
    /// Dump the histories and verdicts as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

fn write_run_outputs(cfg: &RunConfig, records: &[experiment::RunRecord]) -> Result<(), CliError> {
    let rows: Vec<experiment::ResultRow> = records.iter().map(|r| r.row.clone()).collect();
    output::write_csv(Path::new(&cfg.output), cfg, &rows)?;
    if !cfg.trace_dir.is_empty() {
        output::write_traces(Path::new(&cfg.trace_dir), records)?;
    }
    Ok(())
}

/// Runs one command, printing to stdout.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = args.resolve()?;
            let records = experiment::simulate(&cfg)?;
            write_run_outputs(&cfg, &records)?;
            println!("{} rows written to {}", records.len(), cfg.output);
        }
        Command::Sweep(args) => {
            let cfg = args.resolve()?;
            let (records, report) = experiment::sweep(&cfg)?;
            write_run_outputs(&cfg, &records)?;
            output::write_csv(Path::new(&cfg.summary_output), &cfg, &report.summary)?;
            output::write_json(Path::new(&cfg.report), &report)?;
            println!("{} rows written to {}", records.len(), cfg.output);
            for fit in &report.savings_fits {
                println!(
                    "{}: savings degree-1 SSE {:.4e}, degree-2 SSE {:.4e} (R^2 {:.4}), n^2 coefficient {:.4e}",
                    fit.strategy, fit.degree1.sse, fit.degree2.sse, fit.degree2.r_squared, fit.degree2.coefficients[2]
                );
            }
            for s in &report.per_failure_slopes {
                match &s.test {
                    Some(t) => println!("{}: recompute per failure vs n slope {:.4e}, p = {:.3}", s.strategy, t.slope, t.p_value),
                    None => println!("{}: too few runs with failures for a slope test", s.strategy),
                }
            }
        }
        Command::Model(args) => {
            let mu = args.mtbf.parse::<Duration>()?.0;
            let rows = model::model_table(&args.n, mu, args.c_it, args.iter_seconds, args.delta_power, args.dim, args.p_idle)?;
            print!("{}", output::csv_body(&rows)?);
            if let Some(path) = &args.csv {
                std::fs::write(path, output::csv_body(&rows)?)
                    .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            }
        }
        Command::VerifyJacobi(args) => {
            let config = JacobiConfig {
                grid_rows: args.rows,
                grid_cols: args.cols,
                local_n: args.local_n,
                max_iters: args.iters,
                checkpoint_interval: args.ckpt_interval.unwrap_or(args.iters.max(1)),
                ..JacobiConfig::default()
            };
            let strategies: &[JacobiStrategy] = match args.strategy {
                VerifyStrategy::Global => &[JacobiStrategy::GlobalRollback],
                VerifyStrategy::Dfr => &[JacobiStrategy::Dfr],
                VerifyStrategy::Both => &[JacobiStrategy::GlobalRollback, JacobiStrategy::Dfr],
            };
            let options = JacobiOptions { frequency_scaling: !args.no_frequency_scaling, ..JacobiOptions::default() };
            let fault = FaultSpec { victim: args.victim, fail_at_iteration: args.fail_at };
            let v = verify::verify(&config, fault, strategies, &options)?;
            print!("{}", verify::render(&v));
            if let Some(path) = &args.json {
                output::write_json(path, &v)?;
            }
            if !v.passed() {
                return Err(CliError::Verify("faulty run diverged from the fault-free run".into()));
            }
            println!("PASS");
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config(String::new()).exit_code(), 1);
        assert_eq!(CliError::Runtime(String::new()).exit_code(), 2);
        assert_eq!(CliError::Verify(String::new()).exit_code(), 3);
    }

    #[test]
    fn flags_become_overrides() {
        let cli = Cli::try_parse_from(["dfrsim", "simulate", "--preset", "desk", "--n", "12", "--seeds", "2..4", "--strategies", "log,dfr-rect"])
            .unwrap();
        let Command::Simulate(args) = cli.command else { panic!("wrong command") };
        let cfg = args.resolve().unwrap();
        assert_eq!((cfg.n, cfg.iterations), (12, 200));
        assert_eq!(cfg.seeds, vec![2, 3]);
        assert_eq!(cfg.strategies, vec!["log", "dfr-rect"]);
    }
}
