mod args;
mod commands;
mod events;
mod load;

use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use gw_bary::Error;

use args::{Cli, Command};

/// A reason to stop with a non-zero exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub const IO: u8 = 2;
    pub const PRECONDITION: u8 = 3;
    pub const NOT_CONVERGED: u8 = 4;

    pub fn io(message: impl Into<String>) -> Self {
        Failure { code: Self::IO, message: message.into() }
    }

    pub fn precondition(message: impl Into<String>) -> Self {
        Failure { code: Self::PRECONDITION, message: message.into() }
    }

    pub fn not_converged(message: impl Into<String>) -> Self {
        Failure { code: Self::NOT_CONVERGED, message: message.into() }
    }

    pub fn from_io(path: &Path, e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::NotFound {
            Failure::io(format!("input not found: {}", path.display()))
        } else {
            Failure::io(format!("{}: {e}", path.display()))
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::Io(_) | Error::Json(_) | Error::Parse { .. } => Failure::IO,
            Error::NotConverged { .. } => Failure::NOT_CONVERGED,
            Error::InvalidInput(_)
            | Error::Precondition(_)
            | Error::MarginalMismatch(_)
            | Error::Disconnected { .. }
            | Error::DegenerateGauge
            | Error::SizeLimit(_) => Failure::PRECONDITION,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let common = cli.command.common().merged()?;
    events::init(common.quiet.unwrap_or(false));
    if let Some(t) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::precondition(format!("--threads: {e}")))?;
    }
    match &cli.command {
        Command::Gw { inputs, .. } => commands::gw(inputs, &common),
        Command::Barycenter { inputs, .. } => commands::barycenter(inputs, &common),
        Command::Interpolate { inputs, .. } => commands::interpolate(inputs, &common),
        Command::Classify { inputs, labels, restart_rounds, mc_iterations, .. } => {
            commands::classify(inputs, labels, restart_rounds.unwrap_or(1), mc_iterations.unwrap_or(1000), &common)
        }
        Command::Match { inputs, truth, .. } => commands::matching(inputs, truth.as_deref(), &common),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(Failure::PRECONDITION);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
