//! `mcf`: batch front-end for the mean curvature flow FEM laboratory.
//!
//! Subcommands: `mesh` (generate icosphere meshes), `run` (single flow
//! runs), `convergence` (order-of-convergence studies against the
//! shrinking sphere), `verify` (structural-identity sweeps).
//!
//! Exit codes: 0 success, 2 usage/validation error, 3 numerical failure,
//! 4 assertable-invariant violation.

mod cmds;
mod output;

use std::process::ExitCode;

use clap::Parser;

use cmds::{Cli, CliError};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cmds::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(3)
        }
        Err(CliError::Invariant(msg)) => {
            eprintln!("invariant violation: {msg}");
            ExitCode::from(4)
        }
        Err(CliError::Io(err)) => {
            eprintln!("io error: {err}");
            ExitCode::from(1)
        }
    }
}
