//! Crate-wide error type.

/// Errors produced by mesh generation, assembly, solvers and verification.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A size parameter exceeded its implementation cap.
    #[error("capacity exceeded: {what} = {requested} (cap {cap})")]
    Capacity {
        what: &'static str,
        requested: usize,
        cap: usize,
    },

    /// Degenerate geometry detected in a specific element.
    #[error("degenerate geometry in element {element}: {detail}")]
    Geometry { element: usize, detail: String },

    /// A documented precondition of an operation was violated.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Requested evaluation time is at or beyond the singular time.
    #[error("time {t} is at or beyond the singular time {t_sing}")]
    SingularTime { t: f64, t_sing: f64 },

    /// Radial lift is undefined at the sphere centre.
    #[error("lift undefined: point coincides with the sphere centre")]
    UndefinedLift,

    /// An iterative solver failed to reach its tolerance.
    #[error(
        "linear solver stalled after {iterations} iterations \
         (relative residual {residual:.3e}, target {target:.3e})"
    )]
    Iteration {
        iterations: usize,
        residual: f64,
        target: f64,
    },

    /// Matrix failed the symmetric-positive-definite precheck.
    #[error("matrix failed the SPD precheck: {0}")]
    NotSpd(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
