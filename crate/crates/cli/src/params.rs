//! Flag set shared by every subcommand, config-file merging, and the run manifest.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum MethodArg {
    #[value(name = "greedy")]
    #[serde(rename = "greedy")]
    Greedy,
    #[value(name = "gls+")]
    #[serde(rename = "gls+")]
    GlsPlus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum RestartArg {
    #[serde(rename = "local")]
    Local,
    #[serde(rename = "never")]
    Never,
}

/// `0.9` or `0.8:0.95`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RatioArg(pub f64, pub f64);

impl FromStr for RatioArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("bad query ratio `{s}`"));
        match s.split_once(':') {
            Some((lo, hi)) => Ok(RatioArg(num(lo)?, num(hi)?)),
            None => {
                let r = num(s)?;
                Ok(RatioArg(r, r))
            }
        }
    }
}

impl TryFrom<String> for RatioArg {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<RatioArg> for String {
    fn from(r: RatioArg) -> String {
        r.to_string()
    }
}

impl fmt::Display for RatioArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == self.1 {
            write!(f, "{}", self.0)
        } else {
            write!(f, "{}:{}", self.0, self.1)
        }
    }
}

/// Every option. Each one has a config-file key of the same name with `_` for `-`.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// UAI model file
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    /// Evidence file; repeat or comma-separate for eval/sweep query sets
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub evid: Vec<PathBuf>,
    /// Query ratio, fixed (`0.9`) or a uniform range (`0.8:0.95`)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub query_ratio: Option<RatioArg>,
    /// Wall-clock budget of the reference solver per query
    #[arg(long, conflicts_with = "budget_steps")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget_seconds: Option<f64>,
    /// Step budget of the reference solver per query (deterministic)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget_steps: Option<usize>,
    /// States collected per query trajectory
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stl: Option<usize>,
    /// Search steps
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    /// Step counts at which the incumbent is recorded
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub checkpoints: Vec<usize>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodArg>,
    /// Restart rule of greedy search
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub restart: Option<RestartArg>,
    /// Restart every k steps (overrides --restart)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub restart_interval: Option<usize>,
    /// Scorer weight file
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<PathBuf>,
    /// Mixing weight of the network score; a list for sweep
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub lambda: Vec<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Parallel queries (default: all cores)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Output directory
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Extra CSV output file
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    /// Render SVG plots into the output directory
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plots: Option<bool>,
    /// Queries generated when no evidence files are given
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub queries: Option<usize>,
    /// Samples drawn by `sample`
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Gibbs sweeps discarded before the first sample
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    /// Gibbs sweeps between samples
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thin: Option<usize>,
    /// Initial distance of the drift walk
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h0: Option<u64>,
    /// Probability of a distance-reducing step
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Drift walks simulated
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    /// Trajectory JSONL whose reducing-move rate is measured
    #[arg(long, requires = "reference")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<PathBuf>,
    /// Reference solution for --trajectory
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<PathBuf>,
}

impl Params {
    /// Values set in `self` win over those in `file`.
    pub fn over(&self, file: &Params) -> Result<Params, CliError> {
        let mut merged = to_table(file)?;
        for (k, v) in to_table(self)? {
            merged.insert(k, v);
        }
        toml::Value::Table(merged)
            .try_into()
            .map_err(|e| CliError::Usage(format!("cannot merge options: {e}")))
    }

    pub fn model(&self) -> Result<&Path, CliError> {
        self.model
            .as_deref()
            .ok_or_else(|| CliError::Usage("a model is required (positional or --model)".into()))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn plots(&self) -> bool {
        self.plots.unwrap_or(false)
    }
}

fn to_table(p: &Params) -> Result<toml::Table, CliError> {
    toml::Table::try_from(p).map_err(|e| CliError::Usage(format!("cannot encode options: {e}")))
}

/// Reads a flat config file, or the `params` table of a manifest written by a
/// previous run.
pub fn load_config(path: &Path) -> Result<Params, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", path.display())))?;
    let mut table: toml::Table = text
        .parse()
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    let body = match table.remove("params") {
        Some(toml::Value::Table(t)) if table.contains_key("tool_version") => t,
        Some(other) => {
            table.insert("params".into(), other);
            table
        }
        None => table,
    };
    toml::Value::Table(body)
        .try_into()
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool_version: &'a str,
    command: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<&'a Path>,
    seed: u64,
    out: &'a Path,
    params: &'a Params,
}

/// Writes `manifest.toml` into `out`, creating the directory.
pub fn write_manifest(out: &Path, command: &str, config: Option<&Path>, params: &Params) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Data(format!("cannot create {}: {e}", out.display())))?;
    let m = Manifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        command,
        config,
        seed: params.seed(),
        out,
        params,
    };
    let text = toml::to_string(&m).map_err(|e| CliError::Data(format!("cannot encode manifest: {e}")))?;
    let path = out.join("manifest.toml");
    std::fs::write(&path, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}
