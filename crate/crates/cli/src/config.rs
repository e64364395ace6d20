//! Run configuration: a flat TOML table plus `key=value` overrides.

use std::path::Path;
use std::str::FromStr;

use dfrsim_core::engine::RunOptions;
use dfrsim_core::failure::{DAY, HOUR, YEAR};
use dfrsim_core::graph::{build_task_graph, TaskGraph};
use dfrsim_core::platform::{self, LinkSpec, Platform, PowerModel};
use dfrsim_core::strategy::Strategy;
use dfrsim_core::topology::ProcessTopology;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const DESK_PRESET: &str = include_str!("../presets/desk.toml");
pub const PAPER_PRESET: &str = include_str!("../presets/paper.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Process count for `simulate`.
    pub n: usize,
    /// Process counts for `sweep`.
    pub sweep_n: Vec<usize>,
    pub iterations: usize,
    pub checkpoint_interval: usize,
    /// Per-node MTBF: a number of seconds or a string such as `"100h"`.
    pub node_mtbf: Duration,
    pub seeds: Vec<u64>,
    pub strategies: Vec<String>,
    pub flops_rate: f64,
    pub task_flops: f64,
    /// Link bandwidth in bits per second.
    pub bandwidth: f64,
    pub latency: f64,
    pub element_bytes: u64,
    pub subdomain_elements: u64,
    pub power_computing: f64,
    pub power_idle_unscaled: f64,
    pub power_idle_scaled: f64,
    pub power_communicating: f64,
    pub frequency_scaling: bool,
    pub reload_checkpoints: bool,
    pub joules_per_task: f64,
    /// Failure-trace horizon; defaults to twice the failure-free makespan.
    pub horizon_s: Option<f64>,
    pub output: String,
    pub summary_output: String,
    pub report: String,
    /// Directory for per-run JSON traces; empty disables them.
    pub trace_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let power = PowerModel::default();
        RunConfig {
            n: 100,
            sweep_n: vec![100, 200, 400, 600, 800, 1000],
            iterations: 1000,
            checkpoint_interval: 6,
            node_mtbf: Duration(100.0 * HOUR),
            seeds: (0..10).collect(),
            strategies: vec!["global".into(), "dfr-min".into(), "log".into()],
            flops_rate: platform::DEFAULT_FLOPS_RATE,
            task_flops: platform::DEFAULT_TASK_FLOPS,
            bandwidth: platform::DEFAULT_BANDWIDTH_BPS,
            latency: platform::DEFAULT_LATENCY_S,
            element_bytes: platform::DEFAULT_ELEMENT_BYTES,
            subdomain_elements: platform::DEFAULT_SUBDOMAIN_ELEMENTS,
            power_computing: power.computing,
            power_idle_unscaled: power.idle_unscaled,
            power_idle_scaled: power.idle_scaled,
            power_communicating: power.communicating,
            frequency_scaling: true,
            reload_checkpoints: true,
            joules_per_task: 500.0,
            horizon_s: None,
            output: "results.csv".into(),
            summary_output: "sweep_summary.csv".into(),
            report: "sweep_report.json".into(),
            trace_dir: "traces".into(),
        }
    }
}

/// Seconds, written in TOML either as a number or with a unit suffix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Duration(pub f64);

impl FromStr for Duration {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let s = s.trim();
        let bad = || CliError::Config(format!("bad duration {s:?}; expected a number with an optional s/m/h/d/y suffix"));
        let (number, scale) = match s.char_indices().last() {
            Some((i, 's')) => (&s[..i], 1.0),
            Some((i, 'm')) => (&s[..i], 60.0),
            Some((i, 'h')) => (&s[..i], HOUR),
            Some((i, 'd')) => (&s[..i], DAY),
            Some((i, 'y')) => (&s[..i], YEAR),
            Some(_) => (s, 1.0),
            None => return Err(bad()),
        };
        let value: f64 = number.trim().parse().map_err(|_| bad())?;
        if !(value > 0.0 && value.is_finite()) {
            return Err(bad());
        }
        Ok(Duration(value * scale))
    }
}

impl Serialize for Duration {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Duration {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Float(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(v) if v > 0 => Ok(Duration(v as f64)),
            Raw::Float(v) if v > 0.0 && v.is_finite() => Ok(Duration(v)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
            _ => Err(serde::de::Error::custom("duration must be positive")),
        }
    }
}

/// Parses `"0..10"`, `"3"` or `"1,4,9"`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Config(format!("bad seed list {s:?}"));
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        return if a < b { Ok((a..b).collect()) } else { Err(bad()) };
    }
    s.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect()
}

fn parse_override(pair: &str) -> Result<(String, toml::Value), CliError> {
    let (key, raw) = pair
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {pair:?} is not key=value")))?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    // Anything that is not a TOML literal is taken as a bare string.
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key, value))
}

impl RunConfig {
    /// Layers a preset, a file and overrides, later ones winning.
    pub fn load(preset: Option<&str>, file: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = toml::Table::new();
        if let Some(name) = preset {
            let text = match name {
                "desk" => DESK_PRESET,
                "paper" => PAPER_PRESET,
                other => return Err(CliError::Config(format!("unknown preset {other:?}; expected desk or paper"))),
            };
            table.extend(parse_table(text, name)?);
        }
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            table.extend(parse_table(&text, &path.display().to_string())?);
        }
        for pair in overrides {
            let (key, value) = parse_override(pair)?;
            table.insert(key, value);
        }
        let config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |m: String| Err(CliError::Config(m));
        if self.n == 0 {
            return fail("n must be at least 1".into());
        }
        if self.iterations == 0 || self.checkpoint_interval == 0 {
            return fail("iterations and checkpoint_interval must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return fail("seeds must not be empty".into());
        }
        if self.strategies.is_empty() {
            return fail("strategies must not be empty".into());
        }
        self.parsed_strategies()?;
        if self.sweep_n.contains(&0) {
            return fail("sweep_n entries must be at least 1".into());
        }
        if !(self.joules_per_task >= 0.0) {
            return fail("joules_per_task must be non-negative".into());
        }
        if let Some(h) = self.horizon_s {
            if !(h > 0.0) {
                return fail(format!("horizon_s must be positive, got {h}"));
            }
        }
        self.platform(1).map(|_| ())
    }

    pub fn parsed_strategies(&self) -> Result<Vec<Strategy>, CliError> {
        let mut out: Vec<Strategy> = Vec::new();
        for s in &self.strategies {
            let parsed = Strategy::from_str(s).map_err(|e| CliError::Config(e.to_string()))?;
            if out.contains(&parsed) {
                return Err(CliError::Config(format!("strategy {s:?} listed twice")));
            }
            out.push(parsed);
        }
        Ok(out)
    }

    pub fn power(&self) -> PowerModel {
        PowerModel {
            computing: self.power_computing,
            idle_unscaled: self.power_idle_unscaled,
            idle_scaled: self.power_idle_scaled,
            communicating: self.power_communicating,
        }
    }

    pub fn platform(&self, n: usize) -> Result<Platform, CliError> {
        let link = LinkSpec::new(self.bandwidth, self.latency).map_err(|e| CliError::Config(e.to_string()))?;
        let mut p = Platform::homogeneous(n, self.flops_rate, link, self.power())
            .map_err(|e| CliError::Config(e.to_string()))?;
        p.element_bytes = self.element_bytes;
        p.subdomain_elements = self.subdomain_elements;
        Ok(p)
    }

    pub fn graph(&self, n: usize) -> Result<TaskGraph, CliError> {
        let topology = ProcessTopology::line(n).map_err(|e| CliError::Config(e.to_string()))?;
        build_task_graph(topology, self.iterations, self.checkpoint_interval, self.task_flops)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn options(&self) -> RunOptions {
        RunOptions {
            frequency_scaling: self.frequency_scaling,
            reload_checkpoints: self.reload_checkpoints,
            record_timeline: false,
        }
    }

    /// Makespan without failures: every iteration computes, then exchanges.
    pub fn failure_free_makespan(&self) -> Result<f64, CliError> {
        let p = self.platform(1)?;
        let task = platform::task_duration(self.task_flops, &p.hosts[0]);
        Ok(self.iterations as f64 * task + (self.iterations - 1) as f64 * p.exchange_time())
    }

    pub fn horizon(&self) -> Result<f64, CliError> {
        match self.horizon_s {
            Some(h) => Ok(h),
            None => Ok(2.0 * self.failure_free_makespan()?),
        }
    }

    /// Short digest of everything that affects results; output paths excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output.clear();
        c.summary_output.clear();
        c.report.clear();
        c.trace_dir.clear();
        let json = serde_json::to_string(&c).expect("config serialises");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }
}

fn parse_table(text: &str, origin: &str) -> Result<toml::Table, CliError> {
    toml::from_str(text).map_err(|e: toml::de::Error| CliError::Config(format!("{origin}: {}", e.message())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn durations() {
        assert_eq!("100h".parse::<Duration>().unwrap().0, 360_000.0);
        assert_eq!("64000".parse::<Duration>().unwrap().0, 64_000.0);
        assert_eq!("2.5m".parse::<Duration>().unwrap().0, 150.0);
        assert_eq!("50y".parse::<Duration>().unwrap().0, 1.5768e9);
        assert_eq!("1d".parse::<Duration>().unwrap().0, 86_400.0);
        for bad in ["", "h", "-3h", "10w", "0s"] {
            assert!(bad.parse::<Duration>().is_err(), "{bad}");
        }
    }

    #[test]
    fn seeds() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("4, 9").unwrap(), vec![4, 9]);
        assert!(parse_seeds("3..3").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn defaults_are_valid() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(c.seeds.len(), 10);
        assert_eq!(c.failure_free_makespan().unwrap(), 1000.0 * 10.0 + 999.0 * 0.00645);
    }

    #[test]
    fn overrides_win_and_unknown_keys_fail() {
        let c = RunConfig::load(Some("desk"), None, &["n=7".into(), "node_mtbf=\"3h\"".into(), "strategies=[\"log\"]".into()])
            .unwrap();
        assert_eq!(c.n, 7);
        assert_eq!(c.node_mtbf.0, 3.0 * HOUR);
        assert_eq!(c.iterations, 200);
        let bare = RunConfig::load(None, None, &["node_mtbf=5h".into()]).unwrap();
        assert_eq!(bare.node_mtbf.0, 5.0 * HOUR);
        assert!(RunConfig::load(None, None, &["bogus=1".into()]).is_err());
        assert!(RunConfig::load(None, None, &["strategies=[\"nope\"]".into()]).is_err());
        assert!(RunConfig::load(Some("huge"), None, &[]).is_err());
    }

    #[test]
    fn presets_parse() {
        RunConfig::load(Some("desk"), None, &[]).unwrap();
        let paper = RunConfig::load(Some("paper"), None, &[]).unwrap();
        assert_eq!(paper.iterations, 1000);
        assert_eq!(paper.node_mtbf.0, 100.0 * HOUR);
    }

    #[test]
    fn hash_ignores_paths() {
        let a = RunConfig::default();
        let b = RunConfig { output: "elsewhere.csv".into(), ..RunConfig::default() };
        let c = RunConfig { n: 101, ..RunConfig::default() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 16);
    }
}
