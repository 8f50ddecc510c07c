//! Run directories: `<out>/<kind>/<spec-hash>/` holding data files and a
//! `meta.json` sidecar. Data files are deterministic; only the sidecar
//! carries wall-clock information.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use diracsea_core::LatticeSpec;

use crate::config::{Format, RunConfig};
use crate::error::CliResult;
use crate::formats::{spec_hash, SpecRecord, Table};

/// Everything a command produced, before it touches the disk.
#[derive(Debug, Default)]
pub struct Outcome {
    /// Directory name under the output root, e.g. `spectrum` or `vacuum_scan`.
    pub kind: String,
    pub sweep: Vec<LatticeSpec>,
    /// Tables by file stem; written in the configured format.
    pub tables: Vec<(String, Table)>,
    /// Extra JSON documents by file stem.
    pub documents: Vec<(String, Value)>,
    /// Raw files by full name.
    pub binaries: Vec<(String, Vec<u8>)>,
    pub summary: Value,
    /// A failed numerical check; data is still written, then the run exits 2.
    pub failure: Option<String>,
}

impl Outcome {
    pub fn new(kind: impl Into<String>, sweep: Vec<LatticeSpec>) -> Self {
        Self { kind: kind.into(), sweep, summary: Value::Null, ..Self::default() }
    }

    pub fn table(mut self, stem: &str, table: Table) -> Self {
        self.tables.push((stem.to_string(), table));
        self
    }

    pub fn document(mut self, stem: &str, value: Value) -> Self {
        self.documents.push((stem.to_string(), value));
        self
    }

    pub fn spec_hash(&self) -> String {
        spec_hash(&self.sweep)
    }
}

#[derive(Debug, Serialize)]
struct Meta<'a> {
    command: &'a str,
    kind: &'a str,
    config: &'a RunConfig,
    sweep: Vec<SpecRecord>,
    seed: u64,
    spec_hash: String,
    code_version: &'static str,
    wall_time_seconds: f64,
    finished_unix: u64,
    status: &'static str,
    failure: Option<&'a str>,
    files: Vec<String>,
    summary: &'a Value,
}

/// Write `outcome` and return the run directory.
pub fn write_outcome(cfg: &RunConfig, command: &str, outcome: &Outcome, wall_time: f64) -> CliResult<PathBuf> {
    let dir = cfg.out.join(&outcome.kind).join(outcome.spec_hash());
    fs::create_dir_all(&dir)?;
    let mut files = Vec::new();
    for (stem, table) in &outcome.tables {
        files.push(write_table(&dir, stem, table, cfg.format)?);
    }
    for (stem, value) in &outcome.documents {
        let name = format!("{stem}.json");
        write_json(&dir.join(&name), value)?;
        files.push(name);
    }
    for (name, bytes) in &outcome.binaries {
        fs::write(dir.join(name), bytes)?;
        files.push(name.clone());
    }
    let meta = Meta {
        command,
        kind: &outcome.kind,
        config: cfg,
        sweep: outcome.sweep.iter().map(SpecRecord::from).collect(),
        seed: cfg.seed,
        spec_hash: outcome.spec_hash(),
        code_version: env!("CARGO_PKG_VERSION"),
        wall_time_seconds: wall_time,
        finished_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        status: if outcome.failure.is_some() { "numerical_failure" } else { "ok" },
        failure: outcome.failure.as_deref(),
        files,
        summary: &outcome.summary,
    };
    write_json(&dir.join("meta.json"), &serde_json::to_value(&meta)?)?;
    Ok(dir)
}

fn write_table(dir: &Path, stem: &str, table: &Table, format: Format) -> CliResult<String> {
    let name = format!("{stem}.{}", format.extension());
    let path = dir.join(&name);
    match format {
        Format::Csv => table.write_csv(fs::File::create(path)?)?,
        Format::Json => write_json(&path, &table.to_json())?,
    }
    Ok(name)
}

fn write_json(path: &Path, value: &Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
