//! Command-line flags, the optional config file, and their resolution into a
//! [`RunConfig`]. Precedence: flags, then config file, then defaults.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use diracsea_core::fock::MAX_MODES;
use diracsea_core::LatticeSpec;

use crate::error::{CliError, CliResult};
use crate::formats::SpecRecord;

/// Default guard: at most 2^20 basis states without `--allow-large`.
pub const DEFAULT_MODE_LIMIT: usize = 20;
/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "DIRACSEA_OUT";

#[derive(Debug, Parser)]
#[command(name = "diracsea", version, about = "Exact diagonalization of the free lattice Dirac field")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Spatial dimension (1, 2 or 3).
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    /// Sites per side.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Spinor components (2 or 4).
    #[arg(long, global = true)]
    pub spin: Option<usize>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub mass: Option<f64>,
    /// Box length; defaults to `n` (unit spacing).
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub len: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output root; defaults to $DIRACSEA_OUT, then `./out`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Lift the 2^20 basis-state guard.
    #[arg(long, global = true)]
    pub allow_large: bool,
    /// Flat TOML file with any of the keys above.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// One-particle eigen-data.
    Spectrum,
    /// Sea state and its occupancy report.
    Sea,
    /// Born distribution of a named state.
    Born {
        /// sea, bottom, level or packet.
        #[arg(long, default_value = "sea")]
        state: String,
        /// nat, pre or obv.
        #[arg(long, default_value = "nat")]
        measure: String,
    },
    /// Time series of observables under the free evolution.
    Evolve {
        #[arg(long, default_value = "packet")]
        state: String,
        #[arg(long, default_value_t = 1.0)]
        t_max: f64,
        #[arg(long, default_value_t = 0.1)]
        dt: f64,
        /// eigen, dense or krylov.
        #[arg(long, default_value = "eigen")]
        method: String,
        #[arg(long, default_value_t = 1e-10)]
        tolerance: f64,
    },
    /// Sample trajectories of the jump process.
    Bell {
        #[arg(long, default_value = "sea")]
        state: String,
        #[arg(long, default_value_t = 1000)]
        n_traj: usize,
        #[arg(long, default_value_t = 1.0)]
        t_max: f64,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[arg(long, default_value = "eigen")]
        method: String,
        /// Times at which to compare the trajectory marginal with the Born distribution.
        #[arg(long, value_delimiter = ',')]
        probe: Vec<f64>,
        #[arg(long, default_value_t = 200)]
        bootstrap: usize,
    },
    /// Run a scripted study.
    Study {
        /// vacuum_scan, charge_fluctuation, locality, sea_gallery or pair_creation.
        name: String,
        /// default (built-in grid) or single (the spec given by the flags).
        #[arg(long)]
        sweep: Option<String>,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        region_start: usize,
        #[arg(long, default_value_t = 2)]
        region_len: usize,
        #[arg(long, default_value_t = 0.5)]
        time: f64,
        #[arg(long, default_value_t = 2.0)]
        t_max: f64,
        #[arg(long, default_value_t = 20)]
        steps: usize,
    },
    /// Run the invariant suite on the given spec.
    Selftest,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Sea => "sea",
            Command::Born { .. } => "born",
            Command::Evolve { .. } => "evolve",
            Command::Bell { .. } => "bell",
            Command::Study { .. } => "study",
            Command::Selftest => "selftest",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Keys accepted in the config file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    dim: Option<usize>,
    #[serde(alias = "n_per_side")]
    n: Option<usize>,
    #[serde(alias = "spin_dim")]
    spin: Option<usize>,
    mass: Option<f64>,
    #[serde(alias = "box_length")]
    len: Option<f64>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    format: Option<Format>,
    workers: Option<usize>,
    allow_large: Option<bool>,
}

/// Fully resolved run parameters, recorded in every `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub spec: SpecRecord,
    pub seed: u64,
    pub out: PathBuf,
    pub format: Format,
    pub workers: usize,
    pub allow_large: bool,
    pub config_file: Option<PathBuf>,
}

impl RunConfig {
    pub fn lattice(&self) -> LatticeSpec {
        LatticeSpec {
            dim: self.spec.dim,
            n_per_side: self.spec.n_per_side,
            box_length: self.spec.box_length,
            mass: self.spec.mass,
            spin_dim: self.spec.spin_dim,
        }
    }

    /// Reject specs whose Fock space would exceed the guard, before anything
    /// is allocated.
    pub fn check_size(&self, spec: &LatticeSpec) -> CliResult<()> {
        let modes = spec.modes();
        let limit = if self.allow_large { MAX_MODES } else { DEFAULT_MODE_LIMIT };
        if modes > limit {
            let hint = if self.allow_large { "" } else { "; pass --allow-large to raise the limit" };
            return Err(CliError::Validation(format!("{modes} modes give 2^{modes} basis states, above 2^{limit}{hint}")));
        }
        Ok(())
    }
}

pub fn resolve(args: &GlobalArgs, env_out: Option<PathBuf>) -> CliResult<RunConfig> {
    let file = match &args.config {
        Some(path) => read_file_config(path)?,
        None => FileConfig::default(),
    };
    let dim = args.dim.or(file.dim).unwrap_or(1);
    let n = args.n.or(file.n).unwrap_or(4);
    let spin = args.spin.or(file.spin).unwrap_or(if dim == 1 { 2 } else { 4 });
    let mass = args.mass.or(file.mass).unwrap_or(1.0);
    let len = args.len.or(file.len).unwrap_or(n as f64);
    let spec = LatticeSpec { dim, n_per_side: n, box_length: len, mass, spin_dim: spin };
    spec.validate()?;
    let cfg = RunConfig {
        spec: SpecRecord::from(&spec),
        seed: args.seed.or(file.seed).unwrap_or(0),
        out: args.out.clone().or(file.out).or(env_out).unwrap_or_else(|| PathBuf::from("out")),
        format: args.format.or(file.format).unwrap_or(Format::Csv),
        workers: args.workers.or(file.workers).unwrap_or(0),
        allow_large: args.allow_large || file.allow_large.unwrap_or(false),
        config_file: args.config.clone(),
    };
    cfg.check_size(&spec)?;
    Ok(cfg)
}

fn read_file_config(path: &Path) -> CliResult<FileConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("--config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Validation(format!("--config {}: {e}", path.display())))
}
