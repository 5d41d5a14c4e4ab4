//! Error types shared across the crate.

use thiserror::Error;

use crate::newton::SolveDiagnostics;

/// Grid construction errors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid needs at least 8 nodes, got {0}")]
    TooCoarse(usize),
}

/// Domain errors from potential / coupling evaluation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("log coupling requires alpha > 0 (got {0})")]
    NonPositiveAlpha(f64),
    #[error("log coupling requires m > 0 (got {0})")]
    NonPositiveDensity(f64),
    #[error("power coupling with q < 1 is singular at m = 0")]
    SingularAtZero,
    #[error("tabulated potential has {got} values, grid has {expected} nodes")]
    OverrideLength { got: usize, expected: usize },
    #[error("potential must be nonnegative (v[{index}] = {value})")]
    NegativePotential { index: usize, value: f64 },
}

/// Problem construction / validation errors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error("power coupling requires alpha >= 0 (got {0})")]
    NegativeAlpha(f64),
    #[error("invalid solver options: {0}")]
    Options(String),
}

/// Residual / Jacobian evaluation failure at a trial point.
///
/// Inside the Newton line search these are recoverable (the step is shrunk);
/// at an accepted iterate or the starting point they abort the solve.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("residual is not finite at row {row}")]
    NonFinite { row: usize },
    #[error(transparent)]
    Domain(#[from] PotentialError),
    #[error("state vector has length {got}, expected {expected}")]
    BadLength { got: usize, expected: usize },
}

/// Linear least-squares kernel errors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LsqError {
    #[error("matrix is rank deficient (diagonal ratio {ratio:.3e} below threshold)")]
    RankDeficient { ratio: f64 },
    #[error("system has {rows} rows but {cols} columns; need rows >= cols")]
    Underdetermined { rows: usize, cols: usize },
    #[error("dimension mismatch: matrix is {rows}x{cols}, rhs has length {rhs}")]
    Shape { rows: usize, cols: usize, rhs: usize },
}

/// Nonlinear solver failures.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("line search stagnated at step {step:.3e} with |F| = {residual:.3e}")]
    Stagnation {
        step: f64,
        residual: f64,
        diagnostics: SolveDiagnostics,
    },
    #[error(transparent)]
    Linear(#[from] LsqError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("starting point infeasible: density entry {index} = {value:.3e} below min_density")]
    InfeasibleStart { index: usize, value: f64 },
    #[error("cell solution violates invariants: {0}")]
    Precondition(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// Sweep-level failures.
#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep spec: {0}")]
    Invalid(String),
    #[error("{failed} of {total} sweep points failed (more than 10%)")]
    TooManyFailures {
        failed: usize,
        total: usize,
        report: Box<crate::sweep::SweepReport>,
    },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("refinement study has {valid} usable points, need at least 3")]
    InsufficientData { valid: usize },
    #[error("slice point P = {0} is inside the excluded neighborhood of 0")]
    SlicePointAtZero(f64),
}

/// Configuration / IO errors for the CLI surface.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {message}")]
    BadValue { key: String, message: String },
    #[error("{0}")]
    Constraint(String),
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("samples file: {0}")]
    BadSamples(String),
}
