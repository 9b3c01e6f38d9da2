//! Command implementations behind the `pelab` binary.
//!
//! Exit codes: 0 success, 1 validation failure, 2 property failure,
//! 3 runtime failure.

pub mod commands;
pub mod manifest;

use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "PELAB_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "pelab", version, about = "Positional-encoding laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Export attention decay curves as CSV.
    Decay(commands::decay::DecayArgs),
    /// Run the cross-module property suite and report pass/fail.
    Props(commands::props::PropsArgs),
    /// Train and evaluate over a grid of one encoder parameter.
    Sweep(commands::sweep::SweepArgs),
    /// Train a toy model on a synthetic task and save it.
    Train(commands::train_eval::TrainArgs),
    /// Evaluate a saved model over a grid of sequence lengths.
    Eval(commands::train_eval::EvalArgs),
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or an invalid config; exit 1.
    Validation(String),
    /// A property check failed; exit 2.
    PropertyFailure(String),
    /// I/O, divergence, or any other runtime problem; exit 3.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 1,
            Self::PropertyFailure(_) => 2,
            Self::Runtime(_) => 3,
        }
    }

    pub fn validation(e: impl fmt::Display) -> Self {
        Self::Validation(e.to_string())
    }

    pub fn runtime(e: impl fmt::Display) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Validation(m) => write!(f, "validation: {m}"),
            Self::PropertyFailure(m) => write!(f, "property failure: {m}"),
            Self::Runtime(m) => write!(f, "runtime: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

/// Resolve the output directory: flag, else `PELAB_OUT_DIR`, else cwd.
pub fn resolve_out_dir(flag: &Option<PathBuf>) -> PathBuf {
    flag.clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Decay(args) => commands::decay::run(args),
        Command::Props(args) => commands::props::run(args),
        Command::Sweep(args) => commands::sweep::run(args),
        Command::Train(args) => commands::train_eval::run_train(args),
        Command::Eval(args) => commands::train_eval::run_eval(args),
    }
}
