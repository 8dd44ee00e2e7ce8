//! Command-line front end: synthesize frames, fit them, sweep gate metrics and
//! measure moiré amplification, with JSON run documents and CSV/JSON outputs.
//!
//! Precedence of settings: command-line flags, then the JSON document, then
//! built-in defaults. `--seed` replaces every seed in the document.

pub mod commands;
pub mod config;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use tlsscope_core::Exec;

#[derive(Debug, Parser)]
#[command(name = "tlsscope", version, about = "TLS defect models, swap-spectroscopy fits and gate channels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize swap-spectroscopy frames.
    Simulate(RunArgs),
    /// Fit TLS parameters to frames.
    Fit(RunArgs),
    /// Gate error and unitarity sweeps of a TLS-afflicted gate.
    Sweep(RunArgs),
    /// Period magnification of log-sampled against uniformly sampled frames.
    Moire(RunArgs),
    /// Evolution strategy against Nelder–Mead on seeded datasets.
    Compare(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// JSON run document.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (parallel builds only).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(short, long, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("computation error: {0}")]
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Compute(_) => 3,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn cfg_err(e: impl Display) -> CliError {
    CliError::Config(e.to_string())
}

pub(crate) fn comp_err(e: impl Display) -> CliError {
    CliError::Compute(e.to_string())
}

/// Settings shared by all commands after flags are applied.
#[derive(Debug, Clone)]
pub struct RunOpts {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub exec: Exec,
    pub verbose: u8,
}

/// Parsed document, its raw JSON and the directory relative paths refer to.
pub struct Loaded<T> {
    pub doc: T,
    pub raw: serde_json::Value,
    pub base: PathBuf,
}

pub fn load<T: DeserializeOwned>(path: &Path) -> CliResult<Loaded<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
    let doc = serde_json::from_value(raw.clone()).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { doc, raw, base })
}

fn configure_threads(threads: Option<usize>) -> CliResult<()> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(cfg_err("--threads must be at least 1"));
    }
    #[cfg(feature = "parallel")]
    {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    if n > 1 {
        eprintln!("built without the parallel feature; running on one thread");
    }
    Ok(())
}

/// Runs a command and returns its stdout summary.
pub fn run(cli: &Cli) -> CliResult<String> {
    let args = match &cli.command {
        Command::Simulate(a) | Command::Fit(a) | Command::Sweep(a) | Command::Moire(a) | Command::Compare(a) => a,
    };
    configure_threads(args.threads)?;
    std::fs::create_dir_all(&args.out).map_err(|e| cfg_err(format!("{}: {e}", args.out.display())))?;
    let opts = RunOpts { out: args.out.clone(), seed: args.seed, exec: Exec::Parallel, verbose: args.verbose };
    match &cli.command {
        Command::Simulate(a) => commands::simulate(&load(&a.config)?, &opts),
        Command::Fit(a) => commands::fit(&load(&a.config)?, &opts),
        Command::Sweep(a) => commands::sweep(&load(&a.config)?, &opts),
        Command::Moire(a) => commands::moire(&load(&a.config)?, &opts),
        Command::Compare(a) => commands::compare(&load(&a.config)?, &opts),
    }
}
