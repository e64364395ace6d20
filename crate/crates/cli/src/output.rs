//! CSV and JSON writers.
//!
//! Every CSV starts with `#` comment lines carrying the schema version, a
//! generation timestamp, the PRNG identity and the resolved configuration,
//! followed by a header row. Only the timestamp line varies between identical
//! invocations.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use dfrsim_core::failure::PRNG_IDENTITY;
use serde::Serialize;

use crate::config::RunConfig;
use crate::experiment::RunRecord;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

pub const RESULT_COLUMNS: [&str; 9] = [
    "strategy",
    "n",
    "seed",
    "failures_fired",
    "recomputed_tasks",
    "makespan_s",
    "total_energy_J",
    "projected_savings_J",
    "config_hash",
];

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| io_error(dir, e)),
        _ => Ok(()),
    }
}

pub fn metadata_lines(cfg: &RunConfig) -> String {
    let generated = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    format!(
        "# schema_version={SCHEMA_VERSION}\n# generated={generated}\n# prng={PRNG_IDENTITY}\n# config={}\n",
        cfg.to_json()
    )
}

/// Serialises rows to CSV text, header included.
pub fn csv_body<T: Serialize>(rows: &[T]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn write_csv<T: Serialize>(path: &Path, cfg: &RunConfig, rows: &[T]) -> Result<(), CliError> {
    ensure_parent(path)?;
    let mut text = metadata_lines(cfg);
    if rows.is_empty() {
        text.push_str(&RESULT_COLUMNS.join(","));
        text.push('\n');
    } else {
        text.push_str(&csv_body(rows)?);
    }
    let mut f = fs::File::create(path).map_err(|e| io_error(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| io_error(path, e))
}

/// Strips the comment lines and parses the rows that follow.
pub fn read_csv<T: serde::de::DeserializeOwned>(text: &str) -> Result<Vec<T>, CliError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(|e| CliError::Runtime(e.to_string()))).collect()
}

/// Reads `key=value` pairs from the leading comment lines.
pub fn read_metadata(text: &str) -> Vec<(String, String)> {
    text.lines()
        .map_while(|l| l.strip_prefix("# "))
        .filter_map(|l| l.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect()
}

pub fn trace_file_name(r: &RunRecord) -> String {
    format!("{}_n{}_s{}.json", r.row.strategy, r.row.n, r.row.seed)
}

pub fn write_traces(dir: &Path, records: &[RunRecord]) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    for r in records {
        let path = dir.join(trace_file_name(r));
        let json = serde_json::to_string_pretty(&r.trace_file()).map_err(|e| CliError::Runtime(e.to_string()))?;
        fs::write(&path, json).map_err(|e| io_error(&path, e))?;
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    ensure_parent(path)?;
    let json = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(path, json).map_err(|e| io_error(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::ResultRow;

    #[test]
    fn header_matches_schema() {
        let row = ResultRow {
            strategy: "log".into(),
            n: 4,
            seed: 1,
            failures_fired: 2,
            recomputed_tasks: 9,
            makespan_s: 101.5,
            total_energy_j: 5e4,
            projected_savings_j: 0.0,
            config_hash: "abc".into(),
        };
        let body = csv_body(&[row.clone()]).unwrap();
        assert_eq!(body.lines().next().unwrap(), RESULT_COLUMNS.join(","));
        let text = format!("{}{body}", metadata_lines(&RunConfig::default()));
        let meta = read_metadata(&text);
        assert_eq!(meta[0], ("schema_version".into(), "1".into()));
        assert_eq!(meta[2].0, "prng");
        assert_eq!(meta[3].0, "config");
        let parsed: Vec<ResultRow> = read_csv(&text).unwrap();
        assert_eq!(parsed, vec![row]);
    }
}
