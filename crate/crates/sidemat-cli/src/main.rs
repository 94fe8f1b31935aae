//! Command-line front end: estimate panels from CSV files or run the
//! simulation sweeps.

mod cmd_estimate;
mod cmd_sweep;
mod io;
mod report;

use clap::{Parser, Subcommand};

/// Exit codes: 0 success, 2 I/O or parse error, 3 validation error,
/// 4 solver non-convergence (outputs still written).
#[derive(Debug)]
pub enum CliError {
    Io(String),
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    Validation(String),
    NonConvergence(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Parse {
                path,
                line,
                column,
                message,
            } => write!(f, "parse error at {path}:{line}:{column}: {message}"),
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::NonConvergence(m) => write!(f, "solver did not converge: {m}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) | CliError::Parse { .. } => 2,
            CliError::Validation(_) => 3,
            CliError::NonConvergence(_) => 4,
        }
    }
}

impl From<sidemat::Error> for CliError {
    fn from(e: sidemat::Error) -> Self {
        match e {
            sidemat::Error::SvdFailure => CliError::NonConvergence(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "sidemat",
    about = "Matrix estimation with row/column side information",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Estimate a panel from CSV inputs and write the imputed matrix plus a
    /// run report.
    Estimate(cmd_estimate::EstimateArgs),
    /// Run a Monte-Carlo sweep preset and write the result table.
    #[command(alias = "simulate")]
    Sweep(cmd_sweep::SweepArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(args) => cmd_estimate::run(&args),
        Command::Sweep(args) => cmd_sweep::run(&args),
    };
    if let Err(e) = result {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
