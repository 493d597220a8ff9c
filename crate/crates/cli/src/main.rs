//! `stabgen`: simulate chains, train learners, evaluate bounds, run the
//! exact-check suites and the named experiments.

macro_rules! out {
    ($($t:tt)*) => { $crate::output::emit(format_args!($($t)*)) };
}

macro_rules! outln {
    ($($t:tt)*) => { $crate::output::emit(format_args!("{}\n", format_args!($($t)*))) };
}

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "stabgen", version, about = "Stable online learning on mixing processes")]
pub struct Cli {
    /// Experiment config file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the number of paths (or seeds).
    #[arg(long, global = true)]
    pub paths: Option<usize>,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true, env = "STABGEN_WORKERS")]
    pub workers: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write sample paths and the exact mixing table of the configured chain.
    Simulate,
    /// Train on independent paths and compare exact excess risk with the bound.
    Train,
    /// Term-by-term bound evaluation over a grid of lags.
    Bounds {
        /// Theorem to evaluate instead of the config's.
        #[arg(long)]
        theorem: Option<String>,
        /// Largest lag in the printed grid.
        #[arg(long, default_value_t = 50)]
        tau_max: usize,
    },
    /// Run an exact-check suite.
    Verify {
        #[arg(default_value = "all")]
        suite: String,
        /// Perturb a transition row of every chain; the suite must then fail.
        #[arg(long)]
        inject_fault: bool,
    },
    /// Run a named acceptance experiment (E1–E5).
    Experiment { name: String },
}

/// Failure classes, mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Failed(String),
    Other(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Failed(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

impl From<stabgen::Error> for CliError {
    fn from(e: stabgen::Error) -> Self {
        match e {
            stabgen::Error::Config(m) => CliError::Config(m),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = match &e {
                CliError::Config(m) => format!("config error: {m}"),
                CliError::Failed(m) => m.clone(),
                CliError::Other(m) => format!("error: {m}"),
            };
            eprintln!("{msg}");
            ExitCode::from(e.exit_code())
        }
    }
}
