//! Command-line front end for the `noon` simulator.
//!
//! Every command builds its whole output in memory and writes it once, so
//! tests can call [`render`] directly and compare bytes with the binary.

use std::io;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub mod commands;
pub mod output;

pub use commands::{CascadeReport, PoolReport, RunRow, TableRow, TnReport};
pub use output::{Sci, SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Param(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Internal(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "noon", version, about = "Exact linear-optics simulator for recursive NOON-state generation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Double two |n_+> cats once and report success probability, fidelity and leak spectrum.
    Tn(TnArgs),
    /// Exact and asymptotic scaling table for N = 1, 2, 4, ..., 2^k.
    Table(TableArgs),
    /// Monte Carlo of the memory-pool protocol.
    Pool(PoolArgs),
    /// Monte Carlo of the memoryless all-or-nothing cascade.
    Cascade(CascadeArgs),
}

#[derive(Debug, Args)]
pub struct TnArgs {
    /// Photon number of each input cat.
    #[arg(long)]
    pub n: u32,
    /// Detector efficiency used for the lossy acceptance breakdown.
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TableArgs {
    /// Largest exponent k; rows cover N = 2^0 ..= 2^k.
    #[arg(long, short = 'k')]
    pub max_exponent: u32,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PoolArgs {
    /// Photon number of the cats to produce.
    #[arg(long)]
    pub target: u64,
    /// Number of target cats per run.
    #[arg(long)]
    pub count: u64,
    #[arg(long, default_value_t = 1000)]
    pub runs: u64,
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    #[arg(long)]
    pub seed: u64,
    /// Level fed with fresh cats: 1 (single photons) or 2 (two-photon cats).
    #[arg(long, default_value_t = 1)]
    pub initial_level: u64,
    /// Per-run cap on singles consumed.
    #[arg(long)]
    pub max_singles: Option<u64>,
    /// JSON summary destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional per-run, per-level CSV.
    #[arg(long)]
    pub runs_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CascadeArgs {
    #[arg(long)]
    pub target: u64,
    #[arg(long, default_value_t = 100_000)]
    pub runs: u64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// One file produced by a command.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub path: Option<PathBuf>,
    pub contents: String,
}

/// Computes every artifact a command would write, plus stderr warnings.
pub fn render(command: &Command) -> Result<(Vec<Artifact>, Vec<String>), CliError> {
    match command {
        Command::Tn(args) => commands::tn(args),
        Command::Table(args) => commands::table(args),
        Command::Pool(args) => commands::pool(args),
        Command::Cascade(args) => commands::cascade(args),
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let (artifacts, warnings) = render(&cli.command)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    for a in &artifacts {
        output::emit(a.path.as_deref(), &a.contents)?;
    }
    Ok(())
}
