//! Solver library for ergodic mean field games cell problems on the 1-D torus.
//!
//! For a periodic potential v(y) and a coupling in the density (power (αm)^q
//! or logarithmic log(αm)), the cell system
//!
//! ```text
//! (i)   -Δu + ½|u_y + P|² - v(y) - coupling(α m) = H̄(P, α)
//! (ii)  -Δm - (m (u_y + P))_y = 0
//! (iii) ∫u = 0,  ∫m = 1
//! ```
//!
//! determines the effective Hamiltonian H̄(P, α) as the unique constant for
//! which a solution (u, m) exists. The discretization is a monotone upwind
//! finite-difference scheme whose Fokker-Planck transport is the exact adjoint
//! of the Hamilton-Jacobi linearization; the resulting overdetermined
//! nonlinear system of 2N+2 equations in 2N+1 unknowns (H̄ is an extra
//! unknown) is solved by a damped Gauss-Newton method in the least-squares
//! sense.
//!
//! On top of single solves the crate computes the effective drift
//! b̄ = ∫(u_y + P)m, the derivative ∂H̄/∂P via the linearized cell system, the
//! structure residual R = |∫ α V_m(y, αm) m̃ m| measuring how far ∇_P H̄ is
//! from b̄, parameter sweeps with warm starts, grid-refinement order fits, and
//! an audit of the qualitative properties of H̄ and b̄ (monotonicity, growth
//! bounds, convexity, separated α-dependence).
//!
//! The `mfgcell` binary exposes all of it as `solve`, `sweep`, `refine`,
//! `slice`, and `audit` subcommands writing plot-ready CSV tables.

// stencil code reads clearer with explicit indices; negated comparisons are
// deliberate so that NaN fails validation
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod effective;
pub mod error;
pub mod grid;
pub mod lsq;
pub mod newton;
pub mod potential;
pub mod report;
pub mod sweep;
pub mod system;

pub use effective::{
    compute_sample, effective_drift, fd_dhdp, fd_norm_derivative, solve_cell, EffectiveSample,
};
pub use grid::TorusGrid;
pub use newton::{gauss_newton, SolveDiagnostics, SolverOptions};
pub use potential::{Coupling, PotentialSpec};
pub use sweep::{run_sweep, SweepOrdering, SweepReport, SweepSpec};
pub use system::{CellProblem, CellSolution, LinearizedSolution};
