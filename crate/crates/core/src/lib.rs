//! Augmented Lagrangian method for nonlinear conic programs
//!
//! ```text
//! minimize f(x)  subject to  g(x) = Q_0 + Σ x_i Q_i ∈ K
//! ```
//!
//! where the cone `K` (here the copositive cone) is never handled directly:
//! each outer iteration works with a polyhedral outer approximation built
//! from a prefix of a rational simplex grid, and the prefix grows while the
//! method runs.

// `!(x > 0.0)` is deliberate throughout: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alm;
pub mod checks;
pub mod cone_approx;
pub mod error;
pub mod io;
pub mod nnqp;
pub mod objectives;
pub mod problem;
pub mod profile;
pub mod simplex_grid;
pub mod symcore;

pub use alm::{run_alm, AlmConfig, Mode, Mu0Policy, RunReport, Termination};
pub use cone_approx::{PolarProjection, PolyhedralConeApprox};
pub use error::{Error, Result};
pub use nnqp::{solve_nnqp, NnqpOptions, NnqpResult, QpMatrix};
pub use objectives::{finite_difference_check, KnownMinimizer, Objective};
pub use problem::{generate_instance, Certificates, LinearMatrixMap, ProblemInstance};
pub use profile::{PerformanceProfile, ProfileEntry, ProfilePoint};
pub use simplex_grid::{GridPoint, SimplexGrid};
pub use symcore::{frobenius_inner, SymMatrix};
