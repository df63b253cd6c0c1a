//! Normalized solutions of `-Δu - Δ_q u + λu = g(u)` on `R^N` for radial
//! profiles: the nonlinearity and its regularization, radial grids, the
//! discrete energy, a mass-constrained minimizer with ε-continuation, and the
//! numerical certificates built on top of it.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod functional;
pub mod grid;
pub mod nonlinearity;
pub mod numerics;
pub mod solver;

pub use analysis::{
    appendix_divergence, estimate_gn_constant, existence_threshold, find_cbar, max_gtilde, sweep_mass, CbarOutcome,
    EnergyCurve,
};
pub use error::{Error, Result};
pub use functional::{EnergyBreakdown, Functional};
pub use grid::{make_grid, RadialField, RadialGrid};
pub use nonlinearity::{critical_exponents, Eps, Exponents, Nonlinearity, NonlinearityKind, NonlinearitySpec};
pub use solver::{continuation_stages, continuation_solve, minimize_fixed_eps, SolveReport, SolverConfig};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
