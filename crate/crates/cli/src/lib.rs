//! The `zsl` command line: synth, train, evaluate, diagnose, project,
//! steer and serve.
//!
//! Exit codes: 0 on success, 1 for invalid flags or arguments, 2 for I/O,
//! format or numerical failures.

mod args;
mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

pub use args::Cli;
pub use commands::{EvaluationReport, ProjectionExport, SteerReport, SteerSide};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(zsl_core::Error),
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

impl std::error::Error for CliError {}

impl From<zsl_core::Error> for CliError {
    fn from(e: zsl_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_validation() => 1,
            _ => 2,
        }
    }
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .try_init();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    use args::Command::*;
    match cli.command {
        Synth(a) => commands::synth(a),
        Train(a) => commands::train(a),
        Evaluate(a) => commands::evaluate(a),
        Diagnose(a) => commands::diagnose(a),
        Project(a) => commands::project(a),
        Steer(a) => commands::steer(a),
        Serve(a) => commands::serve(a),
    }
}
