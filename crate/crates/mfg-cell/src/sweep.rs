//! Parameter sweeps, refinement studies, asymptotic slices, and the audit of
//! the proved qualitative properties of H̄ and b̄ against computed data.

use rayon::prelude::*;

use crate::effective::{compute_sample, EffectiveSample};
use crate::error::{SolverError, SweepError};
use crate::grid::{quadrature, TorusGrid};
use crate::newton::{SolveDiagnostics, SolverOptions};
use crate::potential::PotentialSpec;
use crate::system::{CellProblem, CellSolution};

/// Traversal order of the parameter grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepOrdering {
    /// Each solve warm-starts from the previous point; P rows walk α in
    /// ascending order and row heads chain along P.
    RowMajorWarm,
    /// Every point solved cold, embarrassingly parallel.
    IndependentCold,
}

/// Sweep description: parameter ranges (min, max, count), grid size,
/// potential, solver options, ordering.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub p_range: (f64, f64, usize),
    pub alpha_range: (f64, f64, usize),
    pub grid_n: usize,
    pub potential: PotentialSpec,
    pub options: SolverOptions,
    pub ordering: SweepOrdering,
}

fn linspace(min: f64, max: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![min];
    }
    let step = (max - min) / (count - 1) as f64;
    (0..count)
        .map(|k| if k + 1 == count { max } else { min + step * k as f64 })
        .collect()
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), SweepError> {
        if self.p_range.2 < 2 || self.alpha_range.2 < 2 {
            return Err(SweepError::Invalid(
                "parameter ranges need at least 2 points".into(),
            ));
        }
        if self.p_range.0 > self.p_range.1 || self.alpha_range.0 > self.alpha_range.1 {
            return Err(SweepError::Invalid("range min exceeds max".into()));
        }
        if self.potential.is_log() && self.alpha_range.0 <= 0.0 {
            return Err(SweepError::Invalid(
                "log potential requires alpha_min > 0".into(),
            ));
        }
        self.potential
            .validate()
            .map_err(|e| SweepError::Invalid(e.to_string()))?;
        self.options
            .validate()
            .map_err(SweepError::Invalid)?;
        Ok(())
    }

    pub fn p_values(&self) -> Vec<f64> {
        linspace(self.p_range.0, self.p_range.1, self.p_range.2)
    }

    pub fn alpha_values(&self) -> Vec<f64> {
        linspace(self.alpha_range.0, self.alpha_range.1, self.alpha_range.2)
    }
}

/// One audited property: name, verdict, worst signed excess over the
/// tolerance (negative = margin), and where it occurred.
#[derive(Debug, Clone)]
pub struct AuditVerdict {
    pub name: String,
    pub passed: bool,
    pub worst_violation: f64,
    pub location: String,
}

/// Grid-refinement record for one quantity.
#[derive(Debug, Clone)]
pub struct RefinementFit {
    pub quantity: String,
    /// Rows (N, h, value), converged solves only.
    pub rows: Vec<(usize, f64, f64)>,
    /// Least-squares slope of log(value) vs log(h), when meaningful.
    pub fitted_order: Option<f64>,
    /// Relative change between the two finest grids.
    pub last_rel_change: Option<f64>,
}

/// Result of a parameter sweep: samples in row-major order (P outer, α
/// inner), plus audit verdicts and refinement fits attached by the caller.
#[derive(Debug, Clone)]
pub struct SweepReport {
    pub grid_n: usize,
    pub p_values: Vec<f64>,
    pub alpha_values: Vec<f64>,
    pub samples: Vec<EffectiveSample>,
    pub audits: Vec<AuditVerdict>,
    pub refinement_fits: Vec<RefinementFit>,
}

impl SweepReport {
    pub fn sample(&self, i_p: usize, i_alpha: usize) -> &EffectiveSample {
        &self.samples[i_p * self.alpha_values.len() + i_alpha]
    }

    pub fn failed_count(&self) -> usize {
        self.samples.iter().filter(|s| s.is_failed()).count()
    }
}

fn failed_sample(p: f64, alpha: f64, err: &SolverError) -> EffectiveSample {
    let diagnostics = match err {
        SolverError::Stagnation { diagnostics, .. } => diagnostics.clone(),
        _ => SolveDiagnostics {
            iterations: 0,
            final_residual_norm: f64::NAN,
            converged: false,
            step_history: Vec::new(),
        },
    };
    EffectiveSample::failed(p, alpha, diagnostics)
}

fn point_problem(spec: &SweepSpec, p: f64, alpha: f64) -> Result<CellProblem, SweepError> {
    let grid = TorusGrid::new(spec.grid_n).map_err(|e| SweepError::Invalid(e.to_string()))?;
    CellProblem::new(grid, spec.potential.clone(), p, alpha, spec.options.clone())
        .map_err(|e| SweepError::Invalid(e.to_string()))
}

/// Walk one P row in ascending α, warm-starting each solve from the previous.
fn sweep_row(
    spec: &SweepSpec,
    p: f64,
    alphas: &[f64],
    head: Option<&CellSolution>,
) -> Result<Vec<EffectiveSample>, SweepError> {
    let mut out = Vec::with_capacity(alphas.len());
    let mut warm: Option<CellSolution> = head.cloned();
    for &alpha in alphas {
        let prob = point_problem(spec, p, alpha)?;
        match compute_sample(&prob, warm.as_ref()) {
            Ok((sample, cell)) => {
                out.push(sample);
                warm = Some(cell);
            }
            Err(err) => out.push(failed_sample(p, alpha, &err)),
        }
    }
    Ok(out)
}

/// Run a full parameter sweep. Failed points are recorded in place and never
/// abort the sweep; more than 10% failures is an error carrying the partial
/// report.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepReport, SweepError> {
    spec.validate()?;
    let p_values = spec.p_values();
    let alpha_values = spec.alpha_values();

    let samples: Vec<EffectiveSample> = match spec.ordering {
        SweepOrdering::IndependentCold => {
            let points: Vec<(f64, f64)> = p_values
                .iter()
                .flat_map(|&p| alpha_values.iter().map(move |&a| (p, a)))
                .collect();
            points
                .par_iter()
                .map(|&(p, alpha)| {
                    let prob = point_problem(spec, p, alpha)?;
                    Ok(match compute_sample(&prob, None) {
                        Ok((sample, _)) => sample,
                        Err(err) => failed_sample(p, alpha, &err),
                    })
                })
                .collect::<Result<Vec<_>, SweepError>>()?
        }
        SweepOrdering::RowMajorWarm => {
            // sequential pass over row heads (first α of each P row), then
            // the rows walk their α values in parallel
            let mut heads: Vec<Option<CellSolution>> = Vec::with_capacity(p_values.len());
            let mut prev_head: Option<CellSolution> = None;
            for &p in &p_values {
                let prob = point_problem(spec, p, alpha_values[0])?;
                match crate::effective::solve_cell(&prob, prev_head.as_ref()) {
                    Ok(cell) => {
                        prev_head = Some(cell.clone());
                        heads.push(Some(cell));
                    }
                    Err(_) => heads.push(None),
                }
            }
            let rows: Vec<Result<Vec<EffectiveSample>, SweepError>> = p_values
                .par_iter()
                .zip(heads.par_iter())
                .map(|(&p, head)| sweep_row(spec, p, &alpha_values, head.as_ref()))
                .collect();
            let mut all = Vec::with_capacity(p_values.len() * alpha_values.len());
            for row in rows {
                all.extend(row?);
            }
            all
        }
    };

    let report = SweepReport {
        grid_n: spec.grid_n,
        p_values,
        alpha_values,
        samples,
        audits: Vec::new(),
        refinement_fits: Vec::new(),
    };
    let failed = report.failed_count();
    let total = report.samples.len();
    if failed * 10 > total {
        return Err(SweepError::TooManyFailures {
            failed,
            total,
            report: Box::new(report),
        });
    }
    Ok(report)
}

/// Quantity tracked by a refinement study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefineQuantity {
    E,
    RelationError,
    R,
}

impl RefineQuantity {
    pub fn label(&self) -> &'static str {
        match self {
            RefineQuantity::E => "E",
            RefineQuantity::RelationError => "relation_error",
            RefineQuantity::R => "R",
        }
    }

    fn extract(&self, s: &EffectiveSample) -> f64 {
        match self {
            RefineQuantity::E => s.e,
            RefineQuantity::RelationError => s.relation_error,
            RefineQuantity::R => s.r,
        }
    }
}

fn fit_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 3 {
        return None;
    }
    let xs: Vec<f64> = points.iter().map(|&(h, _)| h.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, v)| v.ln()).collect();
    let xm = xs.iter().sum::<f64>() / xs.len() as f64;
    let ym = ys.iter().sum::<f64>() / ys.len() as f64;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let den: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    Some(num / den)
}

/// Compute one quantity at each grid size and fit its convergence order
/// (for E and relation_error) or report the limit trend (for R).
pub fn refinement_study(
    point: (f64, f64),
    potential: &PotentialSpec,
    n_list: &[usize],
    quantity: RefineQuantity,
    options: &SolverOptions,
) -> Result<RefinementFit, SweepError> {
    if n_list.len() < 3 {
        return Err(SweepError::InsufficientData {
            valid: n_list.len(),
        });
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SweepError::Invalid(
            "refinement grid sizes must be strictly increasing".into(),
        ));
    }
    let (p, alpha) = point;
    let mut rows = Vec::new();
    for &n in n_list {
        let grid = TorusGrid::new(n).map_err(|e| SweepError::Invalid(e.to_string()))?;
        let prob = CellProblem::new(grid, potential.clone(), p, alpha, options.clone())
            .map_err(|e| SweepError::Invalid(e.to_string()))?;
        if let Ok((sample, _)) = compute_sample(&prob, None) {
            if sample.diagnostics.converged {
                rows.push((n, 1.0 / n as f64, quantity.extract(&sample)));
            }
        }
    }
    if rows.len() < 3 {
        return Err(SweepError::InsufficientData { valid: rows.len() });
    }
    let fitted_order = match quantity {
        RefineQuantity::R => None,
        _ => {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|&&(_, _, v)| v > 1e-13)
                .map(|&(_, h, v)| (h, v))
                .collect();
            fit_log_slope(&pts)
        }
    };
    let last_rel_change = {
        let k = rows.len();
        let (_, _, v1) = rows[k - 2];
        let (_, _, v2) = rows[k - 1];
        if v2.abs() > 0.0 {
            Some((v2 - v1).abs() / v2.abs())
        } else {
            None
        }
    };
    Ok(RefinementFit {
        quantity: quantity.label().to_string(),
        rows,
        fitted_order,
        last_rel_change,
    })
}

/// One row of an asymptotic slice in P.
#[derive(Debug, Clone)]
pub struct SliceRow {
    pub p: f64,
    /// H̄(P, α)/P²
    pub hbar_over_p2: f64,
    /// |b̄(P, α) − P|/|P|
    pub drift_gap_rel: f64,
}

/// Compute H̄/P² and |b̄−P|/|P| along a list of P values at fixed α, with the
/// cell solves warm-started along increasing |P|. Failed rows carry NaN.
pub fn asymptotic_slice(
    alpha: f64,
    p_list: &[f64],
    potential: &PotentialSpec,
    n: usize,
    options: &SolverOptions,
) -> Result<Vec<SliceRow>, SweepError> {
    for &p in p_list {
        if p.abs() < 1e-3 {
            return Err(SweepError::SlicePointAtZero(p));
        }
    }
    let mut order: Vec<usize> = (0..p_list.len()).collect();
    order.sort_by(|&a, &b| p_list[a].abs().total_cmp(&p_list[b].abs()));

    let mut rows: Vec<SliceRow> = p_list
        .iter()
        .map(|&p| SliceRow {
            p,
            hbar_over_p2: f64::NAN,
            drift_gap_rel: f64::NAN,
        })
        .collect();
    let mut warm: Option<CellSolution> = None;
    for idx in order {
        let p = p_list[idx];
        let grid = TorusGrid::new(n).map_err(|e| SweepError::Invalid(e.to_string()))?;
        let prob = CellProblem::new(grid, potential.clone(), p, alpha, options.clone())
            .map_err(|e| SweepError::Invalid(e.to_string()))?;
        if let Ok((sample, cell)) = compute_sample(&prob, warm.as_ref()) {
            rows[idx].hbar_over_p2 = sample.hbar / (p * p);
            rows[idx].drift_gap_rel = (sample.bbar - p).abs() / p.abs();
            warm = Some(cell);
        }
    }
    Ok(rows)
}

/// Smallest root R ≥ 1 of R = 1 + R^{q/(q+1)}, by bisection to 1e-12.
pub fn coercivity_root(q: f64) -> f64 {
    let gamma = q / (q + 1.0);
    let f = |r: f64| r - 1.0 - r.powf(gamma);
    let mut lo = 1.0;
    let mut hi = 2.0;
    while f(hi) <= 0.0 {
        hi *= 2.0;
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Relative audit tolerance τ = 1e-6·(1 + |value|).
fn tau(value: f64) -> f64 {
    1e-6 * (1.0 + value.abs())
}

struct Worst {
    excess: f64,
    location: String,
}

impl Worst {
    fn new() -> Self {
        Self {
            excess: f64::NEG_INFINITY,
            location: String::from("-"),
        }
    }

    fn update(&mut self, excess: f64, location: String) {
        if excess > self.excess {
            self.excess = excess;
            self.location = location;
        }
    }

    fn verdict(self, name: &str) -> AuditVerdict {
        let seen = self.excess.is_finite();
        AuditVerdict {
            name: name.to_string(),
            passed: seen && self.excess <= 0.0,
            worst_violation: if seen { self.excess } else { f64::NAN },
            location: self.location,
        }
    }
}

/// Audit every proved qualitative property against the sweep data.
///
/// Checks: (a) H̄ nonincreasing in α; (b) coercivity bounds on H̄ (power) /
/// the variational upper bound (log); (c) convexity of H̄ in P (log);
/// (d) b̄ nondecreasing in P; (e) structure residual: positive floor (power) /
/// E = O(h) (log); (f) α-separation of H̄ + log α (log).
pub fn property_audit(report: &SweepReport, potential: &PotentialSpec) -> Vec<AuditVerdict> {
    let np = report.p_values.len();
    let na = report.alpha_values.len();
    let grid = TorusGrid::new(report.grid_n).expect("report grid size is valid");
    let v = potential.sample_v(&grid).expect("potential sampled on sweep grid");
    let h = grid.h();
    let mut verdicts = Vec::new();

    let loc = |i: usize, j: usize| {
        format!(
            "P={}, alpha={}",
            report.p_values[i], report.alpha_values[j]
        )
    };
    let get = |i: usize, j: usize| &report.samples[i * na + j];

    // (a) alpha-monotonicity of Hbar along every alpha column
    let mut worst = Worst::new();
    for i in 0..np {
        for j in 0..na - 1 {
            let (s0, s1) = (get(i, j), get(i, j + 1));
            if s0.is_failed() || s1.is_failed() {
                continue;
            }
            worst.update(s1.hbar - s0.hbar - tau(s0.hbar), loc(i, j + 1));
        }
    }
    verdicts.push(worst.verdict("alpha-monotone"));

    // (b) growth bounds
    let mut worst = Worst::new();
    match potential.power_exponent() {
        Some(q) => {
            let rq = coercivity_root(q);
            let vbar = quadrature(&grid, &v);
            for i in 0..np {
                for j in 0..na {
                    let s = get(i, j);
                    if s.is_failed() {
                        continue;
                    }
                    let p = s.p;
                    let aq = s.alpha.powf(q);
                    let upper = p * p / 2.0 - aq;
                    let lower = p * p / 2.0 - (1.0 + rq) * vbar - rq * aq;
                    worst.update(s.hbar - upper - tau(upper), loc(i, j));
                    worst.update(lower - s.hbar - tau(lower), loc(i, j));
                }
            }
        }
        None => {
            let exp_neg_v: Vec<f64> = v.iter().map(|&x| (-x).exp()).collect();
            let log_quad = quadrature(&grid, &exp_neg_v).ln();
            for i in 0..np {
                for j in 0..na {
                    let s = get(i, j);
                    if s.is_failed() {
                        continue;
                    }
                    let bound = s.p * s.p / 2.0 + log_quad;
                    worst.update(s.hbar + s.alpha.ln() - bound - tau(bound), loc(i, j));
                }
            }
        }
    }
    verdicts.push(worst.verdict("hbar-bounds"));

    // (c) convexity of Hbar in P (log case)
    if potential.is_log() {
        let mut worst = Worst::new();
        for j in 0..na {
            for i in 1..np - 1 {
                let (sm, s0, sp) = (get(i - 1, j), get(i, j), get(i + 1, j));
                if sm.is_failed() || s0.is_failed() || sp.is_failed() {
                    continue;
                }
                let second = sp.hbar - 2.0 * s0.hbar + sm.hbar;
                worst.update(-second - tau(s0.hbar), loc(i, j));
            }
        }
        verdicts.push(worst.verdict("convex-in-P"));
    }

    // (d) drift monotone in P
    let mut worst = Worst::new();
    for j in 0..na {
        for i in 0..np - 1 {
            let (s0, s1) = (get(i, j), get(i + 1, j));
            if s0.is_failed() || s1.is_failed() {
                continue;
            }
            worst.update(s0.bbar - s1.bbar - tau(s0.bbar), loc(i + 1, j));
        }
    }
    verdicts.push(worst.verdict("drift-monotone"));

    // (e) structure residual
    let mut worst = Worst::new();
    if potential.is_log() {
        for i in 0..np {
            for j in 0..na {
                let s = get(i, j);
                if s.is_failed() {
                    continue;
                }
                let bound = 0.5 * h * (1.0 + s.p.abs());
                worst.update(s.e - bound, loc(i, j));
            }
        }
        verdicts.push(worst.verdict("structure-error-order-h"));
    } else {
        let mut max_r = f64::NEG_INFINITY;
        let mut min_r = f64::INFINITY;
        let mut at = String::from("-");
        for i in 0..np {
            for j in 0..na {
                let s = get(i, j);
                if s.is_failed() || s.alpha <= 0.0 {
                    continue;
                }
                if s.r > max_r {
                    max_r = s.r;
                    at = loc(i, j);
                }
                min_r = min_r.min(s.r);
            }
        }
        worst.update(1e-3 - max_r, format!("max R at {at}, min R = {min_r:.3e}"));
        verdicts.push(worst.verdict("structure-residual-positive"));
    }

    // (f) separated alpha-dependence (log case)
    if potential.is_log() {
        let mut worst = Worst::new();
        for i in 0..np {
            let reference = get(i, 0);
            if reference.is_failed() {
                continue;
            }
            let base = reference.hbar + report.alpha_values[0].ln();
            for j in 1..na {
                let s = get(i, j);
                if s.is_failed() {
                    continue;
                }
                let sep = (s.hbar + s.alpha.ln() - base).abs();
                worst.update(sep - 1e-6, loc(i, j));
            }
        }
        verdicts.push(worst.verdict("alpha-separation"));
    }

    verdicts
}
