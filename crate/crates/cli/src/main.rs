//! `chaos`: cumulants, rates and distance proxies for vectors of multiple
//! Wiener–Itô integrals.
//!
//! Precedence of settings: CHAOS_SEED / CHAOS_THREADS environment variables,
//! then command-line flags, then `--config` (a config file or an earlier
//! report, which is replayed exactly).

mod commands;
mod config;
mod error;
mod report;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{Map, Value};

use config::{env_layer, load_config, CumulantPath, Format, Layer, Method};
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "chaos", version, about = "Cumulants and optimal-rate diagnostics for Wiener chaos vectors")]
struct Cli {
    /// Config file or earlier report to replay.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = automatic).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Report destination (default: stdout).
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Cmd>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Kernel file utilities.
    Kernel {
        #[command(subcommand)]
        action: KernelAction,
    },
    /// Joint cumulants up to a given order.
    Cumulant(CumulantArgs),
    /// The rate functional M(F) and its two branches.
    Rate(KernelsArg),
    /// Smooth-distance proxy D(F) against N(0, Cov F).
    Distance(DistanceArgs),
    /// Draw samples to a little-endian f64 file with a JSON sidecar.
    Simulate(SimulateArgs),
    /// M and D over a parameter grid of a family.
    Sweep(SweepArgs),
    /// Worked examples.
    Example {
        #[command(subcommand)]
        which: ExampleCmd,
    },
}

#[derive(Subcommand, Debug)]
enum KernelAction {
    /// Check schema, shape and symmetry.
    Validate(KernelsArg),
}

#[derive(Subcommand, Debug)]
enum ExampleCmd {
    /// Step-function kernels with N = 3n.
    Step(StepArgs),
    /// Complex Ornstein–Uhlenbeck statistic F_T.
    Ou(OuArgs),
    /// Toeplitz quadratic functionals.
    Toeplitz(ToeplitzArgs),
}

#[derive(Args, Debug, Serialize)]
struct KernelsArg {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    kernels: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct CumulantArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    kernels: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_order: Option<usize>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    path: Option<CumulantPath>,
}

#[derive(Args, Debug, Serialize)]
struct DistanceArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    kernels: Option<PathBuf>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    method: Option<Method>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    kernels: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<usize>,
    /// Binary sample file; the sidecar goes next to it with a .json extension.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    /// Also estimate cumulants up to this order (0 = none).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_order: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    /// Family to sweep (currently: step).
    #[serde(skip_serializing_if = "Option::is_none")]
    family: Option<String>,
    /// Parameter grid start:end[:step], inclusive.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<String>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    method: Option<Method>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct StepArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct OuArgs {
    /// λ = Re γ.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    /// Im γ.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    omega: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    horizon: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dt: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    paths: Option<usize>,
    /// Quadrature grid size for the kernel moments.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct ToeplitzArgs {
    /// Spectral density: gaussian, cauchy, zero or case-ii.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    f: Option<String>,
    /// Comma-separated weights from the same catalog.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    g: Option<Vec<String>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    horizon: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_order: Option<usize>,
}

fn tagged<T: Serialize>(tag: &str, args: &T) -> Map<String, Value> {
    let Value::Object(mut m) = serde_json::to_value(args).expect("args serialize") else { unreachable!() };
    m.insert("subcommand".into(), Value::String(tag.into()));
    m
}

fn command_layer(cmd: &Cmd) -> Map<String, Value> {
    match cmd {
        Cmd::Kernel { action: KernelAction::Validate(a) } => tagged("kernel-validate", a),
        Cmd::Cumulant(a) => tagged("cumulant", a),
        Cmd::Rate(a) => tagged("rate", a),
        Cmd::Distance(a) => tagged("distance", a),
        Cmd::Simulate(a) => tagged("simulate", a),
        Cmd::Sweep(a) => tagged("sweep", a),
        Cmd::Example { which: ExampleCmd::Step(a) } => tagged("example-step", a),
        Cmd::Example { which: ExampleCmd::Ou(a) } => tagged("example-ou", a),
        Cmd::Example { which: ExampleCmd::Toeplitz(a) } => tagged("example-toeplitz", a),
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            load_config(&text)?
        }
        None => Layer::default(),
    };
    let flags = Layer { command: cli.command.as_ref().map(command_layer), seed: cli.seed, threads: cli.threads, format: cli.format };
    let env = env_layer(|k| std::env::var(k).ok())?;
    let cfg = file.overlay(flags).overlay(env).resolve()?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| CliError::invalid(format!("thread pool: {e}")))?;
    }
    let report = commands::run(&cfg)?;
    let text = report::render(&cfg, &report);
    match &cli.output {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::io(path, e)),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::io(std::path::Path::new("<stdout>"), e)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            eprintln!("{}", CliError::Usage(e.to_string().trim().to_string()).record());
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::FAILURE
        }
    }
}
