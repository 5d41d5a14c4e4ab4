//! Damped Gauss-Newton for overdetermined nonlinear systems.
//!
//! Steps are least-squares solutions Δ = argmin ‖J(x)Δ + F(x)‖₂ with Armijo
//! backtracking on the merit ½‖F‖². An optional density guard keeps selected
//! components above `min_density`, which is what allows the logarithmic
//! coupling to be iterated from infeasible-looking trial steps: the step is
//! shrunk before the residual is ever evaluated there.

use std::ops::Range;

use crate::error::{EvalError, SolverError};
use crate::lsq::LsqOperator;

/// Tunables for the Gauss-Newton iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Convergence threshold on ‖F‖∞.
    pub tol_residual: f64,
    /// Stop when the accepted step satisfies ‖tΔ‖∞ ≤ tol_step.
    pub tol_step: f64,
    pub max_iterations: usize,
    /// Armijo slope fraction, in (0,1).
    pub armijo_c: f64,
    /// Line-search shrink factor, in (0,1).
    pub backtrack_factor: f64,
    /// Positivity guard for density components.
    pub min_density: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_residual: 1e-10,
            tol_step: 1e-12,
            max_iterations: 100,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            min_density: 1e-12,
        }
    }
}

impl SolverOptions {
    /// Default options with a different residual tolerance.
    pub fn with_tol(tol_residual: f64) -> Self {
        Self {
            tol_residual,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.tol_residual > 0.0) {
            return Err(format!("tol_residual must be positive, got {}", self.tol_residual));
        }
        if !(self.tol_step > 0.0) {
            return Err(format!("tol_step must be positive, got {}", self.tol_step));
        }
        if !(0.0 < self.armijo_c && self.armijo_c < 1.0) {
            return Err(format!("armijo_c must be in (0,1), got {}", self.armijo_c));
        }
        if !(0.0 < self.backtrack_factor && self.backtrack_factor < 1.0) {
            return Err(format!(
                "backtrack_factor must be in (0,1), got {}",
                self.backtrack_factor
            ));
        }
        if !(self.min_density > 0.0) {
            return Err(format!("min_density must be positive, got {}", self.min_density));
        }
        Ok(())
    }
}

/// Outcome record of one nonlinear solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveDiagnostics {
    /// Accepted Newton steps.
    pub iterations: usize,
    pub final_residual_norm: f64,
    /// True iff final_residual_norm ≤ tol_residual.
    pub converged: bool,
    /// Line-search step lengths t_k of the accepted steps.
    pub step_history: Vec<f64>,
}

/// A nonlinear least-squares problem: residual, Jacobian, and (optionally)
/// the index range of components that must stay above `min_density`.
pub trait NlsProblem {
    type Jac: LsqOperator;

    fn residual(&self, x: &[f64]) -> Result<Vec<f64>, EvalError>;
    fn jacobian(&self, x: &[f64]) -> Result<Self::Jac, EvalError>;

    fn density_span(&self) -> Option<Range<usize>> {
        None
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const MIN_LINE_SEARCH_STEP: f64 = 1e-14;

/// Damped Gauss-Newton iteration.
///
/// Returns the final iterate and diagnostics; `converged` reflects whether
/// ‖F‖∞ reached `tol_residual`. Stops on small residual, small step, or
/// `max_iterations`; a failed line search is an error carrying diagnostics.
pub fn gauss_newton<P: NlsProblem>(
    problem: &P,
    x0: &[f64],
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolveDiagnostics), SolverError> {
    opts.validate()
        .map_err(|e| SolverError::Problem(crate::error::ProblemError::Options(e)))?;
    let span = problem.density_span();
    if let Some(range) = &span {
        for i in range.clone() {
            if x0[i] < opts.min_density {
                return Err(SolverError::InfeasibleStart {
                    index: i,
                    value: x0[i],
                });
            }
        }
    }

    let mut x = x0.to_vec();
    let mut f = problem.residual(&x)?;
    let mut norm = inf_norm(&f);
    if !norm.is_finite() {
        return Err(EvalError::NonFinite { row: 0 }.into());
    }
    let mut steps: Vec<f64> = Vec::new();
    let mut iterations = 0usize;

    while iterations < opts.max_iterations {
        if norm <= opts.tol_residual {
            break;
        }
        let jac = problem.jacobian(&x)?;
        let neg_f: Vec<f64> = f.iter().map(|v| -v).collect();
        let delta = jac.solve_lsq(&neg_f)?.x;
        if inf_norm(&delta) <= opts.tol_step {
            break;
        }
        let slope = dot(&f, &jac.apply(&delta));
        let merit0 = 0.5 * dot(&f, &f);

        let mut t = 1.0;
        let accepted = loop {
            if t < MIN_LINE_SEARCH_STEP {
                return Err(SolverError::Stagnation {
                    step: t,
                    residual: norm,
                    diagnostics: SolveDiagnostics {
                        iterations,
                        final_residual_norm: norm,
                        converged: false,
                        step_history: steps,
                    },
                });
            }
            let cand: Vec<f64> = x.iter().zip(&delta).map(|(xi, di)| xi + t * di).collect();
            let feasible = span
                .as_ref()
                .is_none_or(|r| cand[r.clone()].iter().all(|&m| m >= opts.min_density));
            if !feasible {
                t *= opts.backtrack_factor;
                continue;
            }
            match problem.residual(&cand) {
                Err(_) => {
                    t *= opts.backtrack_factor;
                }
                Ok(fc) => {
                    let mc = 0.5 * dot(&fc, &fc);
                    // strict decrease guards against t·slope underflowing
                    // below one ulp of the merit
                    if mc < merit0 && mc <= merit0 + opts.armijo_c * t * slope {
                        break (cand, fc);
                    }
                    t *= opts.backtrack_factor;
                }
            }
        };
        let step_inf = t * inf_norm(&delta);
        x = accepted.0;
        f = accepted.1;
        norm = inf_norm(&f);
        steps.push(t);
        iterations += 1;
        if step_inf <= opts.tol_step {
            break;
        }
    }

    let converged = norm <= opts.tol_residual;
    Ok((
        x,
        SolveDiagnostics {
            iterations,
            final_residual_norm: norm,
            converged,
            step_history: steps,
        },
    ))
}
