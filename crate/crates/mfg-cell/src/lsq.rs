//! Linear least-squares kernels.
//!
//! Two backends behind one trait: a dense QR (nalgebra) for small systems and
//! the public [`solve_linear_lsq`] operation, and a Givens row-merging QR for
//! the sparse row-structured systems the cell problem produces (cyclic band
//! plus two dense quadrature rows and one dense column). Both are orthogonal
//! factorizations; normal equations are never formed.

use nalgebra::{DMatrix, DVector};

use crate::error::LsqError;

/// Relative diagonal threshold below which a factor is declared rank deficient.
pub const RANK_TOL: f64 = 1e-12;

/// Solution of min ‖Ax − b‖₂.
#[derive(Debug, Clone)]
pub struct LsqSolution {
    pub x: Vec<f64>,
    /// ‖Ax − b‖₂ at the minimizer.
    pub residual_norm: f64,
}

/// A matrix that can be applied and solved in the least-squares sense.
pub trait LsqOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn solve_lsq(&self, rhs: &[f64]) -> Result<LsqSolution, LsqError>;
}

/// Least-squares solution of an overdetermined dense system via QR.
///
/// Errors if the R diagonal ratio falls below [`RANK_TOL`] or if the system
/// has fewer rows than columns.
pub fn solve_linear_lsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, LsqError> {
    let sol = dense_lsq(a, b.as_slice())?;
    Ok(DVector::from_vec(sol.x))
}

pub(crate) fn dense_lsq(a: &DMatrix<f64>, b: &[f64]) -> Result<LsqSolution, LsqError> {
    let (m, n) = a.shape();
    if m < n {
        return Err(LsqError::Underdetermined { rows: m, cols: n });
    }
    if b.len() != m {
        return Err(LsqError::Shape {
            rows: m,
            cols: n,
            rhs: b.len(),
        });
    }
    let qr = a.clone().qr();
    let r = qr.r();
    let mut dmax = 0.0f64;
    let mut dmin = f64::INFINITY;
    for j in 0..n {
        let d = r[(j, j)].abs();
        dmax = dmax.max(d);
        dmin = dmin.min(d);
    }
    if dmin <= RANK_TOL * dmax {
        return Err(LsqError::RankDeficient {
            ratio: if dmax > 0.0 { dmin / dmax } else { 0.0 },
        });
    }
    let y = qr.q().transpose() * DVector::from_column_slice(b);
    let x = r
        .solve_upper_triangular(&y)
        .ok_or(LsqError::RankDeficient { ratio: 0.0 })?;
    let res = (a * &x - DVector::from_column_slice(b)).norm();
    Ok(LsqSolution {
        x: x.as_slice().to_vec(),
        residual_norm: res,
    })
}

/// Dense least-squares operator.
#[derive(Debug, Clone)]
pub struct DenseLsq {
    a: DMatrix<f64>,
}

impl DenseLsq {
    pub fn new(a: DMatrix<f64>) -> Self {
        Self { a }
    }
}

impl LsqOperator for DenseLsq {
    fn nrows(&self) -> usize {
        self.a.nrows()
    }

    fn ncols(&self) -> usize {
        self.a.ncols()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (&self.a * DVector::from_column_slice(x)).as_slice().to_vec()
    }

    fn solve_lsq(&self, rhs: &[f64]) -> Result<LsqSolution, LsqError> {
        dense_lsq(&self.a, rhs)
    }
}

/// Row-sparse matrix with per-row (column, value) entries.
#[derive(Debug, Clone)]
pub struct SparseRows {
    nrows: usize,
    ncols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn new(ncols: usize) -> Self {
        Self {
            nrows: 0,
            ncols,
            rows: Vec::new(),
        }
    }

    /// Append a row; entries need not be sorted, zero entries are dropped.
    pub fn push_row(&mut self, mut entries: Vec<(usize, f64)>) {
        entries.retain(|&(c, v)| {
            debug_assert!(c < self.ncols);
            v != 0.0
        });
        entries.sort_unstable_by_key(|&(c, _)| c);
        self.rows.push(entries);
        self.nrows += 1;
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.nrows, self.ncols);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                a[(i, j)] += v;
            }
        }
        a
    }
}

/// A partially reduced row spanning columns [start, start + vals.len()).
#[derive(Debug, Clone)]
struct WorkRow {
    start: usize,
    vals: Vec<f64>,
    rhs: f64,
}

impl WorkRow {
    fn from_sparse(entries: &[(usize, f64)], rhs: f64) -> Option<Self> {
        if entries.is_empty() {
            return None;
        }
        let start = entries[0].0;
        let end = entries[entries.len() - 1].0 + 1;
        let mut vals = vec![0.0; end - start];
        for &(c, v) in entries {
            vals[c - start] += v;
        }
        Some(Self { start, vals, rhs })
    }

    /// Drop exact leading zeros; returns false if the row is entirely zero.
    fn normalize(&mut self) -> bool {
        let lead = self.vals.iter().position(|&v| v != 0.0);
        match lead {
            Some(0) => true,
            Some(k) => {
                self.vals.drain(..k);
                self.start += k;
                true
            }
            None => false,
        }
    }

    fn end(&self) -> usize {
        self.start + self.vals.len()
    }
}

/// Rotate `work` against the pivot row `r` (both leading at the same column)
/// so that the leading entry of `work` becomes zero.
fn givens_merge(r: &mut WorkRow, work: &mut WorkRow) {
    debug_assert_eq!(r.start, work.start);
    let a = r.vals[0];
    let b = work.vals[0];
    let rad = a.hypot(b);
    let (c, s) = (a / rad, b / rad);
    let end = r.end().max(work.end());
    r.vals.resize(end - r.start, 0.0);
    work.vals.resize(end - work.start, 0.0);
    for k in 0..(end - r.start) {
        let rv = r.vals[k];
        let wv = work.vals[k];
        r.vals[k] = c * rv + s * wv;
        work.vals[k] = -s * rv + c * wv;
    }
    work.vals[0] = 0.0;
    let rr = r.rhs;
    let wr = work.rhs;
    r.rhs = c * rr + s * wr;
    work.rhs = -s * rr + c * wr;
}

impl LsqOperator for SparseRows {
    fn nrows(&self) -> usize {
        self.nrows
    }

    fn ncols(&self) -> usize {
        self.ncols
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, v)| v * x[j]).sum())
            .collect()
    }

    /// Givens row-merging QR: rows are folded one at a time into an upper
    /// triangular factor indexed by leading column. Fully annihilated rows
    /// contribute their rotated rhs to the least-squares residual.
    fn solve_lsq(&self, rhs: &[f64]) -> Result<LsqSolution, LsqError> {
        if self.nrows < self.ncols {
            return Err(LsqError::Underdetermined {
                rows: self.nrows,
                cols: self.ncols,
            });
        }
        if rhs.len() != self.nrows {
            return Err(LsqError::Shape {
                rows: self.nrows,
                cols: self.ncols,
                rhs: rhs.len(),
            });
        }
        let mut order: Vec<usize> = (0..self.nrows).collect();
        order.sort_by_key(|&i| self.rows[i].first().map_or(usize::MAX, |&(c, _)| c));

        let mut r_rows: Vec<Option<WorkRow>> = (0..self.ncols).map(|_| None).collect();
        let mut residual_sq = 0.0;
        for i in order {
            let Some(mut work) = WorkRow::from_sparse(&self.rows[i], rhs[i]) else {
                residual_sq += rhs[i] * rhs[i];
                continue;
            };
            loop {
                if !work.normalize() {
                    residual_sq += work.rhs * work.rhs;
                    break;
                }
                match &mut r_rows[work.start] {
                    slot @ None => {
                        *slot = Some(work);
                        break;
                    }
                    Some(pivot) => givens_merge(pivot, &mut work),
                }
            }
        }

        let mut dmax = 0.0f64;
        let mut dmin = f64::INFINITY;
        for slot in &r_rows {
            match slot {
                Some(row) => {
                    let d = row.vals[0].abs();
                    dmax = dmax.max(d);
                    dmin = dmin.min(d);
                }
                None => {
                    return Err(LsqError::RankDeficient { ratio: 0.0 });
                }
            }
        }
        if dmin <= RANK_TOL * dmax {
            return Err(LsqError::RankDeficient { ratio: dmin / dmax });
        }

        let mut x = vec![0.0; self.ncols];
        for j in (0..self.ncols).rev() {
            let row = r_rows[j].as_ref().unwrap();
            let mut acc = row.rhs;
            for (k, &v) in row.vals.iter().enumerate().skip(1) {
                acc -= v * x[j + k];
            }
            x[j] = acc / row.vals[0];
        }
        Ok(LsqSolution {
            x,
            residual_norm: residual_sq.max(0.0).sqrt(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn square_system_recovers_solution() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0]);
        let x0 = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let b = &a * &x0;
        let x = solve_linear_lsq(&a, &b).unwrap();
        assert_relative_eq!(x, x0, max_relative = 1e-12);
    }

    #[test]
    fn tall_system_takes_mean() {
        let a = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let b = DVector::from_vec(vec![0.0, 2.0]);
        let x = solve_linear_lsq(&a, &b).unwrap();
        assert_relative_eq!(x[0], 1.0, max_relative = 1e-14);
    }

    #[test]
    fn duplicate_column_is_rank_deficient() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(matches!(
            solve_linear_lsq(&a, &b),
            Err(LsqError::RankDeficient { .. })
        ));
    }

    #[test]
    fn underdetermined_rejected() {
        let a = DMatrix::zeros(2, 3);
        let b = DVector::zeros(2);
        assert!(matches!(
            solve_linear_lsq(&a, &b),
            Err(LsqError::Underdetermined { rows: 2, cols: 3 })
        ));
    }

    /// Normal-equations oracle with compensated (Kahan) accumulation and a
    /// hand-rolled Cholesky solve. Independent of the QR path above.
    fn normal_equations_oracle(a: &DMatrix<f64>, b: &[f64]) -> Vec<f64> {
        let (m, n) = a.shape();
        let kdot = |x: &dyn Fn(usize) -> f64, y: &dyn Fn(usize) -> f64| -> f64 {
            let mut sum = 0.0;
            let mut comp = 0.0;
            for k in 0..m {
                let term = x(k) * y(k) - comp;
                let t = sum + term;
                comp = (t - sum) - term;
                sum = t;
            }
            sum
        };
        let mut ata = vec![vec![0.0; n]; n];
        let mut atb = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                ata[i][j] = kdot(&|k| a[(k, i)], &|k| a[(k, j)]);
            }
            atb[i] = kdot(&|k| a[(k, i)], &|k| b[k]);
        }
        // Cholesky: ata = L Lᵀ
        let mut l = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = ata[i][j];
                for k in 0..j {
                    s -= l[i][k] * l[j][k];
                }
                if i == j {
                    l[i][j] = s.sqrt();
                } else {
                    l[i][j] = s / l[j][j];
                }
            }
        }
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = atb[i];
            for k in 0..i {
                s -= l[i][k] * y[k];
            }
            y[i] = s / l[i][i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[k][i] * x[k];
            }
            x[i] = s / l[i][i];
        }
        x
    }

    #[test]
    fn random_tall_system_matches_normal_equations_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (m, n) = (50, 30);
        let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
        let b: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = solve_linear_lsq(&a, &DVector::from_column_slice(&b)).unwrap();
        let x_oracle = normal_equations_oracle(&a, &b);
        for j in 0..n {
            assert_relative_eq!(x[j], x_oracle[j], max_relative = 1e-8);
        }
    }

    fn random_band_system(rng: &mut ChaCha8Rng, n: usize) -> (SparseRows, Vec<f64>) {
        // cyclic band + one dense column + one dense row, like the cell Jacobian
        let mut rows = SparseRows::new(n);
        for i in 0..(n - 1) {
            let mut entries = vec![
                (i, rng.gen_range(1.0..2.0)),
                ((i + 1) % (n - 1), rng.gen_range(-0.5..0.5)),
                (n - 1, rng.gen_range(-0.5..0.5)),
            ];
            entries.dedup_by_key(|e| e.0);
            rows.push_row(entries);
        }
        rows.push_row((0..n).map(|j| (j, rng.gen_range(0.1..0.2))).collect());
        // extra redundant-ish rows to make it overdetermined
        for i in 0..3 {
            rows.push_row(vec![(i, rng.gen_range(0.5..1.0)), (i + 2, rng.gen_range(-1.0..1.0))]);
        }
        let b = (0..rows.nrows()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        (rows, b)
    }

    #[test]
    fn band_qr_matches_dense_qr() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for n in [8usize, 23, 60] {
            let (rows, b) = random_band_system(&mut rng, n);
            let sparse = rows.solve_lsq(&b).unwrap();
            let dense = dense_lsq(&rows.to_dense(), &b).unwrap();
            for j in 0..n {
                assert_relative_eq!(sparse.x[j], dense.x[j], max_relative = 1e-9, epsilon = 1e-12);
            }
            assert_relative_eq!(
                sparse.residual_norm,
                dense.residual_norm,
                max_relative = 1e-8,
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn band_qr_detects_missing_column() {
        let mut rows = SparseRows::new(3);
        rows.push_row(vec![(0, 1.0)]);
        rows.push_row(vec![(0, 2.0)]);
        rows.push_row(vec![(2, 1.0)]);
        rows.push_row(vec![(2, 0.5)]);
        assert!(matches!(
            rows.solve_lsq(&[1.0, 2.0, 3.0, 4.0]),
            Err(LsqError::RankDeficient { .. })
        ));
    }

    #[test]
    fn band_qr_residual_on_inconsistent_system() {
        // [1;1] x = (0, 2): residual sqrt(2)
        let mut rows = SparseRows::new(1);
        rows.push_row(vec![(0, 1.0)]);
        rows.push_row(vec![(0, 1.0)]);
        let sol = rows.solve_lsq(&[0.0, 2.0]).unwrap();
        assert_relative_eq!(sol.x[0], 1.0, max_relative = 1e-14);
        assert_relative_eq!(sol.residual_norm, std::f64::consts::SQRT_2, max_relative = 1e-14);
    }
}
