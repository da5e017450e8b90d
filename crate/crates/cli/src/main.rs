//! `rgflow`: experiment recipes for lattice RBMs.
//!
//! Every verb reads one TOML config (`--config`) and writes its outputs into
//! the output directory. Exit codes: 0 success, 2 configuration or usage
//! error, 3 I/O or malformed file, 4 numerical failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::ExperimentConfig;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Usage(String),
    Io(String),
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Numeric(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<rgflow::Error> for CliError {
    fn from(e: rgflow::Error) -> Self {
        use rgflow::Error::*;
        match e {
            Dimension(m) => CliError::Config(format!("dimension mismatch: {m}")),
            InvalidArgument(m) => CliError::Config(m),
            Numeric(m) => CliError::Numeric(m),
            e @ (Format { .. } | Io(_) | Image(_)) => CliError::Io(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "rgflow", version, about = "Lattice RBM and renormalization-group experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample or ingest a dataset and write it as RGDS.
    Generate(Args),
    /// Train an RBM or a greedy stack; writes RBMW files and loss curves.
    Train(Args),
    /// Build RBM parameters directly from the data covariance.
    BuildRgm(Args),
    /// Singular values, radial spectra and comparisons of a weight matrix.
    Analyze(Args),
    /// Reconstruction errors and image grid for several models.
    Compare(Args),
    /// Subspace-stability check of a dataset.
    Solvable(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (verb, args) = match &cli.command {
        Command::Generate(a) => (commands::generate as commands::Verb, a),
        Command::Train(a) => (commands::train as commands::Verb, a),
        Command::BuildRgm(a) => (commands::build_rgm as commands::Verb, a),
        Command::Analyze(a) => (commands::analyze as commands::Verb, a),
        Command::Compare(a) => (commands::compare as commands::Verb, a),
        Command::Solvable(a) => (commands::solvable as commands::Verb, a),
    };
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.out {
        cfg.out_dir = o.clone();
    }
    verb(&cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rgflow: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
