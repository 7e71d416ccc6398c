//! Subcommand definitions and dispatch.

pub mod convergence;
pub mod mesh;
pub mod run;
pub mod verify;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration or arguments (exit 2).
    Usage(String),
    /// Solver/geometry failure during computation (exit 3).
    Numerical(String),
    /// An assertable-class invariant failed (exit 4).
    Invariant(String),
    Io(std::io::Error),
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Io(err)
    }
}

impl From<mcf_core::Error> for CliError {
    fn from(err: mcf_core::Error) -> Self {
        use mcf_core::Error::*;
        match err {
            Capacity { .. } | Precondition(_) | SingularTime { .. } => {
                CliError::Usage(err.to_string())
            }
            Geometry { .. } | Iteration { .. } | NotSpd(_) | UndefinedLift => {
                CliError::Numerical(err.to_string())
            }
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> Self {
        CliError::Io(err.into())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "mcf",
    version,
    about = "Evolving-surface FEM laboratory for mean curvature flow of closed surfaces"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a degree-k icosphere mesh and write it as JSON.
    Mesh(mesh::MeshArgs),
    /// Run a single flow and write the trajectory and final state.
    Run(run::RunArgs),
    /// Convergence study against the shrinking sphere, with EOC tables.
    Convergence(convergence::ConvergenceArgs),
    /// Evaluate a structural identity across randomized trials.
    Verify(verify::VerifyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    /// Explicit 4-stage Runge-Kutta reference for the semidiscrete system.
    Rk4,
    /// Linearly implicit Euler.
    Lieuler,
}

impl SchemeArg {
    pub fn to_core(self) -> mcf_core::solver::Scheme {
        match self {
            SchemeArg::Rk4 => mcf_core::solver::Scheme::SemidiscreteRk4,
            SchemeArg::Lieuler => mcf_core::solver::Scheme::LinearlyImplicitEuler,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TauRuleArg {
    /// h²/8 capped by the measured explicit stability bound.
    Auto,
    /// The plain h²/8 coupling (can be unstable for degree >= 2).
    H2Over8,
}

/// Thread cap for study cells: `MCF_THREADS`, defaulting to the available
/// parallelism.
pub fn thread_cap() -> usize {
    std::env::var("MCF_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Mesh(args) => mesh::run(args),
        Command::Run(args) => run::run(args),
        Command::Convergence(args) => convergence::run(args),
        Command::Verify(args) => verify::run(args),
    }
}

/// Parses a comma-separated list of small integers.
pub fn parse_usize_list(input: &str, what: &str) -> Result<Vec<usize>, CliError> {
    let values: Result<Vec<usize>, _> = input.split(',').map(|s| s.trim().parse()).collect();
    let values =
        values.map_err(|_| CliError::Usage(format!("invalid {what} list: {input:?}")))?;
    if values.is_empty() {
        return Err(CliError::Usage(format!("empty {what} list")));
    }
    Ok(values)
}
