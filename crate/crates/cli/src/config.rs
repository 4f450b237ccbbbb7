//! Run configuration and its resolution from config file, flags and
//! environment (highest precedence last).

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ExactCf,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CumulantPath {
    General,
    Trace,
}

fn d_max_order() -> usize {
    4
}
fn d_samples() -> usize {
    100_000
}
fn d_method() -> Method {
    Method::ExactCf
}
fn d_path() -> CumulantPath {
    CumulantPath::General
}
fn d_family() -> String {
    "step".into()
}
fn d_range() -> String {
    "3:31:2".into()
}
fn d_n() -> usize {
    3
}
fn d_lambda() -> f64 {
    1.0
}
fn d_zero() -> f64 {
    0.0
}
fn d_horizon() -> f64 {
    10.0
}
fn d_paths() -> usize {
    100_000
}
fn d_grid() -> usize {
    1000
}
fn d_spectral() -> String {
    "gaussian".into()
}
fn d_weights() -> Vec<String> {
    vec!["gaussian".into()]
}
fn d_t_horizon() -> f64 {
    100.0
}
fn d_t_grid() -> usize {
    2000
}
fn d_t_order() -> usize {
    3
}

/// A fully resolved subcommand. Field defaults live here, so that flags,
/// config files and replayed reports all fill the same structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Command {
    KernelValidate {
        kernels: PathBuf,
    },
    Cumulant {
        kernels: PathBuf,
        #[serde(default = "d_max_order")]
        max_order: usize,
        #[serde(default = "d_path")]
        path: CumulantPath,
    },
    Rate {
        kernels: PathBuf,
    },
    Distance {
        kernels: PathBuf,
        #[serde(default = "d_method")]
        method: Method,
        #[serde(default = "d_samples")]
        samples: usize,
    },
    Simulate {
        kernels: PathBuf,
        #[serde(default = "d_samples")]
        samples: usize,
        out: PathBuf,
        #[serde(default)]
        max_order: usize,
    },
    Sweep {
        #[serde(default = "d_family")]
        family: String,
        #[serde(default = "d_range")]
        n: String,
        #[serde(default = "d_method")]
        method: Method,
        #[serde(default = "d_samples")]
        samples: usize,
    },
    ExampleStep {
        #[serde(default = "d_n")]
        n: usize,
    },
    ExampleOu {
        #[serde(default = "d_lambda")]
        lambda: f64,
        #[serde(default = "d_zero")]
        omega: f64,
        #[serde(default = "d_horizon")]
        horizon: f64,
        /// Defaults to horizon / 2000.
        #[serde(default)]
        dt: Option<f64>,
        #[serde(default = "d_paths")]
        paths: usize,
        #[serde(default = "d_grid")]
        grid: usize,
    },
    ExampleToeplitz {
        #[serde(default = "d_spectral")]
        f: String,
        #[serde(default = "d_weights")]
        g: Vec<String>,
        #[serde(default = "d_t_horizon")]
        horizon: f64,
        #[serde(default = "d_t_grid")]
        grid: usize,
        #[serde(default = "d_t_order")]
        max_order: usize,
    },
}

impl Command {
    pub fn default_format(&self) -> Format {
        match self {
            Command::Sweep { .. } => Format::Csv,
            _ => Format::Json,
        }
    }
}

/// Everything needed to reproduce a report. The output path is deliberately
/// not part of it, so a replay may write elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    /// 0 lets the thread pool choose.
    pub threads: usize,
    pub format: Format,
}

/// Partially specified configuration from one source.
#[derive(Debug, Clone, Default)]
pub struct Layer {
    /// Subcommand fields as a JSON object including the "subcommand" tag.
    pub command: Option<Map<String, Value>>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub format: Option<Format>,
}

impl Layer {
    /// Values from `upper` win; subcommand fields merge only when both layers
    /// name the same subcommand.
    pub fn overlay(self, upper: Layer) -> Layer {
        let command = match (self.command, upper.command) {
            (Some(mut base), Some(top)) if base.get("subcommand") == top.get("subcommand") => {
                base.extend(top);
                Some(base)
            }
            (base, None) => base,
            (_, top) => top,
        };
        Layer {
            command,
            seed: upper.seed.or(self.seed),
            threads: upper.threads.or(self.threads),
            format: upper.format.or(self.format),
        }
    }

    pub fn resolve(self) -> Result<RunConfig, CliError> {
        let map = self.command.ok_or_else(|| CliError::invalid("no subcommand given and no --config to replay"))?;
        let command: Command =
            serde_json::from_value(Value::Object(map)).map_err(|e| CliError::invalid(format!("subcommand parameters: {e}")))?;
        let format = self.format.unwrap_or_else(|| command.default_format());
        Ok(RunConfig { command, seed: self.seed.unwrap_or(0), threads: self.threads.unwrap_or(0), format })
    }
}

/// CHAOS_SEED and CHAOS_THREADS.
pub fn env_layer(get: impl Fn(&str) -> Option<String>) -> Result<Layer, CliError> {
    let parse = |name: &str| -> Result<Option<u64>, CliError> {
        match get(name) {
            None => Ok(None),
            Some(s) => s
                .trim()
                .parse::<u64>()
                .map(Some)
                .map_err(|_| CliError::invalid(format!("environment variable {name}={s:?} is not a non-negative integer"))),
        }
    };
    Ok(Layer { seed: parse("CHAOS_SEED")?, threads: parse("CHAOS_THREADS")?.map(|t| t as usize), ..Layer::default() })
}

/// Reads a RunConfig from a config file, a JSON report, or a CSV report's
/// `# config:` line.
/// Settings read from a config file. Only the subcommand is required.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    command: Map<String, Value>,
    seed: Option<u64>,
    threads: Option<usize>,
    format: Option<Format>,
}

/// Reads a config file, a JSON report (its "config" member) or a CSV report
/// (its `# config:` line).
pub fn load_config(text: &str) -> Result<Layer, CliError> {
    let trimmed = text.trim_start();
    let value: Value = match trimmed.lines().find_map(|l| l.strip_prefix("# config: ")) {
        Some(line) => serde_json::from_str(line).map_err(|e| CliError::invalid(format!("config line: {e}")))?,
        None => {
            let v: Value = serde_json::from_str(trimmed)
                .map_err(|e| CliError::invalid(format!("config file is neither JSON nor a CSV report: {e}")))?;
            v.get("config").cloned().unwrap_or(v)
        }
    };
    let f: FileConfig = serde_json::from_value(value).map_err(|e| CliError::invalid(format!("config: {e}")))?;
    Ok(Layer { command: Some(f.command), seed: f.seed, threads: f.threads, format: f.format })
}

/// "start:end[:step]", inclusive.
pub fn parse_range(spec: &str) -> Result<Vec<usize>, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str| s.trim().parse::<usize>().map_err(|_| CliError::invalid(format!("bad range {spec:?}: expected start:end[:step]")));
    let (start, end, step) = match parts.as_slice() {
        [a, b] => (num(a)?, num(b)?, 1),
        [a, b, c] => (num(a)?, num(b)?, num(c)?),
        _ => return Err(CliError::invalid(format!("bad range {spec:?}: expected start:end[:step]"))),
    };
    if step == 0 || start > end || start == 0 {
        return Err(CliError::invalid(format!("bad range {spec:?}: need 1 <= start <= end and step >= 1")));
    }
    Ok((start..=end).step_by(step).collect())
}
