//! Evolving-surface finite elements for mean curvature flow of closed
//! surfaces in ambient 3-space.
//!
//! The crate evolves a nodal position vector `x` under the matrix-vector
//! system `M(x) ẋ + A(x) x = 0`, where `M(x)` and `A(x)` are the mass and
//! stiffness matrices assembled on the discrete surface `Γ_h[x]` spanned by
//! `x`. Alongside the solvers it ships a verification laboratory that
//! evaluates the structural identities behind the scheme (matrix-difference
//! identities in a θ-family of intermediate surfaces, the monotone-structure
//! decomposition of the discrete surface Laplacian, norm-equivalence
//! constants, defect norms) and reproduces convergence orders against the
//! exact shrinking-sphere solution.
//!
//! Module map:
//! - [`mesh`]: degree-k curved triangulations of the sphere (icosphere
//!   family), refinement, quality statistics, icosahedral symmetry orbits.
//! - [`femspace`]: Lagrange reference elements, triangle quadrature, and
//!   per-point curved-element geometry (metric, normal, tangential
//!   gradients).
//! - [`assembly`]: sparse symmetric mass/stiffness assembly, discrete norms,
//!   and the θ-family of intermediate nodal vectors.
//! - [`exactflow`]: the shrinking sphere as exact mean curvature flow,
//!   analytic lifts, and geometric approximation errors.
//! - [`solver`]: conjugate gradients, an explicit Runge-Kutta reference
//!   integrator, the linearly implicit Euler scheme, and full flow runs.
//! - [`verify`]: identity reports, the trace functional, norm-equivalence
//!   probes, defect computation, and experimental orders of convergence.
//!
//! All numerics are generic over the scalar type through [`scalar::Real`];
//! concrete `f64` aliases live at the crate root.

pub mod assembly;
pub mod error;
pub mod exactflow;
pub mod femspace;
pub mod linalg;
pub mod mesh;
pub mod nodal;
pub mod scalar;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
pub use mesh::SurfaceMesh;
pub use scalar::Real;

/// Nodal vector with `f64` entries.
pub type NodalVector64 = nodal::NodalVector<f64>;
/// Sparse symmetric matrix with `f64` entries.
pub type SparseSymMatrix64 = assembly::SparseSymMatrix<f64>;
/// Lagrange reference element over `f64`.
pub type ReferenceElement64 = femspace::ReferenceElement<f64>;
/// Reference-triangle quadrature rule over `f64`.
pub type QuadratureRule64 = femspace::QuadratureRule<f64>;
/// Shrinking-sphere solution over `f64`.
pub type SphereSolution64 = exactflow::SphereSolution<f64>;
/// Flow configuration over `f64`.
pub type FlowConfig64 = solver::FlowConfig<f64>;
