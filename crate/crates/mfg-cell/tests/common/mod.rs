//! Independent dense oracle for cross-checking the solver.
//!
//! Deliberately a from-scratch implementation: textbook index arithmetic,
//! direct second differences, dense nalgebra assembly, and a plain damped
//! Newton iteration whose steps come from nalgebra's QR least squares. It
//! shares no assembly or factorization code with the library.

#![allow(dead_code)]
#![allow(clippy::needless_range_loop)]

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, PartialEq)]
pub enum OracleCoupling {
    Power(f64),
    Log,
}

pub struct DenseOracle {
    pub n: usize,
    pub h: f64,
    pub v: Vec<f64>,
    pub coupling: OracleCoupling,
    pub p: f64,
    pub alpha: f64,
}

pub struct OracleSolution {
    pub u: Vec<f64>,
    pub m: Vec<f64>,
    pub hbar: f64,
    pub residual_norm: f64,
    pub c: f64,
    pub bbar: f64,
    pub r: f64,
}

impl DenseOracle {
    pub fn new(n: usize, amplitude: f64, coupling: OracleCoupling, p: f64, alpha: f64) -> Self {
        let h = 1.0 / n as f64;
        let v = (0..n)
            .map(|i| {
                let y = i as f64 * h;
                let s = (2.0 * std::f64::consts::PI * y).sin();
                let c = (4.0 * std::f64::consts::PI * y).cos();
                amplitude * (1.0 + 0.5 * (s + c))
            })
            .collect();
        Self {
            n,
            h,
            v,
            coupling,
            p,
            alpha,
        }
    }

    fn g_of(&self, m: f64) -> f64 {
        match self.coupling {
            OracleCoupling::Power(q) => (self.alpha * m).powf(q),
            OracleCoupling::Log => (self.alpha * m).ln(),
        }
    }

    fn g_dm(&self, m: f64) -> f64 {
        match self.coupling {
            OracleCoupling::Power(q) => {
                if self.alpha == 0.0 {
                    0.0
                } else {
                    q * self.alpha.powf(q) * m.powf(q - 1.0)
                }
            }
            OracleCoupling::Log => 1.0 / m,
        }
    }

    pub fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let h = self.h;
        let mut f = DVector::zeros(2 * n + 2);
        for i in 0..n {
            let ip = (i + 1) % n;
            let im = (i + n - 1) % n;
            let lap_u = (x[ip] - 2.0 * x[i] + x[im]) / (h * h);
            let pm = (x[i] - x[im]) / h + self.p;
            let pp = (x[ip] - x[i]) / h + self.p;
            let g = 0.5 * (pm.max(0.0).powi(2) + pp.min(0.0).powi(2));
            f[i] = -lap_u + g - self.v[i] - self.g_of(x[n + i]) - x[2 * n];
        }
        for i in 0..n {
            let ip = (i + 1) % n;
            let im = (i + n - 1) % n;
            let lap_m = (x[n + ip] - 2.0 * x[n + i] + x[n + im]) / (h * h);
            // interface fluxes of the adjoint upwind transport
            let s_right = (x[ip] - x[i]) / h + self.p;
            let s_left = (x[i] - x[im]) / h + self.p;
            let flux_right = x[n + i] * s_right.min(0.0) + x[n + ip] * s_right.max(0.0);
            let flux_left = x[n + im] * s_left.min(0.0) + x[n + i] * s_left.max(0.0);
            f[n + i] = -lap_m - (flux_right - flux_left) / h;
        }
        f[2 * n] = x.rows(0, n).sum() / n as f64;
        f[2 * n + 1] = x.rows(n, n).sum() / n as f64 - 1.0;
        f
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n;
        let h = self.h;
        let mut jac = DMatrix::zeros(2 * n + 2, 2 * n + 1);
        for i in 0..n {
            let ip = (i + 1) % n;
            let im = (i + n - 1) % n;
            let pm = (x[i] - x[im]) / h + self.p;
            let pp = (x[ip] - x[i]) / h + self.p;
            let a = pm.max(0.0);
            let b = pp.min(0.0);
            jac[(i, im)] += -1.0 / (h * h) - a / h;
            jac[(i, i)] += 2.0 / (h * h) + (a - b) / h;
            jac[(i, ip)] += -1.0 / (h * h) + b / h;
            jac[(i, n + i)] = -self.g_dm(x[n + i]);
            jac[(i, 2 * n)] = -1.0;
        }
        for i in 0..n {
            let ip = (i + 1) % n;
            let im = (i + n - 1) % n;
            let s_right = (x[ip] - x[i]) / h + self.p;
            let s_left = (x[i] - x[im]) / h + self.p;
            jac[(n + i, n + im)] += -1.0 / (h * h) + s_left.min(0.0) / h;
            jac[(n + i, n + i)] +=
                2.0 / (h * h) + (s_left.max(0.0) - s_right.min(0.0)) / h;
            jac[(n + i, n + ip)] += -1.0 / (h * h) - s_right.max(0.0) / h;
            let w_right = if s_right < 0.0 { x[n + i] } else { x[n + ip] };
            let w_left = if s_left < 0.0 { x[n + im] } else { x[n + i] };
            jac[(n + i, ip)] += -w_right / (h * h);
            jac[(n + i, i)] += (w_right + w_left) / (h * h);
            jac[(n + i, im)] += -w_left / (h * h);
        }
        for j in 0..n {
            jac[(2 * n, j)] = 1.0 / n as f64;
            jac[(2 * n + 1, n + j)] = 1.0 / n as f64;
        }
        jac
    }

    fn residual_dp(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let h = self.h;
        let mut out = DVector::zeros(2 * n + 2);
        for i in 0..n {
            let ip = (i + 1) % n;
            let im = (i + n - 1) % n;
            let pm = (x[i] - x[im]) / h + self.p;
            let pp = (x[ip] - x[i]) / h + self.p;
            out[i] = pm.max(0.0) + pp.min(0.0);
        }
        for i in 0..n {
            let ip = (i + 1) % n;
            let im = (i + n - 1) % n;
            let s_right = (x[ip] - x[i]) / h + self.p;
            let s_left = (x[i] - x[im]) / h + self.p;
            let w_right = if s_right < 0.0 { x[n + i] } else { x[n + ip] };
            let w_left = if s_left < 0.0 { x[n + im] } else { x[n + i] };
            out[n + i] = -(w_right - w_left) / h;
        }
        out
    }

    fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
        let qr = a.clone().qr();
        let y = qr.q().transpose() * b;
        qr.r().solve_upper_triangular(&y).expect("full rank")
    }

    /// Plain damped Newton on the least-squares system.
    pub fn solve(&self, tol: f64) -> OracleSolution {
        let n = self.n;
        let mut x = DVector::zeros(2 * n + 1);
        for i in 0..n {
            x[n + i] = 1.0;
        }
        x[2 * n] = self.p * self.p / 2.0 - self.v.iter().sum::<f64>() / n as f64 - self.g_of(1.0);

        for _ in 0..60 {
            let f = self.residual(&x);
            if f.amax() <= tol {
                break;
            }
            let jac = self.jacobian(&x);
            let delta = Self::lstsq(&jac, &(-&f));
            let mut t = 1.0;
            for _ in 0..50 {
                let cand = &x + t * &delta;
                let mut feasible = true;
                for i in 0..n {
                    if cand[n + i] < 1e-10 {
                        feasible = false;
                        break;
                    }
                }
                if feasible {
                    let fc = self.residual(&cand);
                    if fc.norm_squared() < f.norm_squared() {
                        x = cand;
                        break;
                    }
                }
                t *= 0.5;
            }
        }
        let f = self.residual(&x);
        let norm = f.amax();

        // linearized system at the solution
        let jac = self.jacobian(&x);
        let rhs = -self.residual_dp(&x);
        let mut z = Self::lstsq(&jac, &rhs);
        let corr = Self::lstsq(&jac, &(&rhs - &jac * &z));
        z += corr;

        let u: Vec<f64> = (0..n).map(|i| x[i]).collect();
        let m: Vec<f64> = (0..n).map(|i| x[n + i]).collect();
        let mut bbar = 0.0;
        for i in 0..n {
            let ip = (i + 1) % n;
            let im = (i + n - 1) % n;
            let grad = (u[ip] - u[im]) / (2.0 * self.h);
            bbar += (grad + self.p) * m[i];
        }
        bbar /= n as f64;
        let mut r = 0.0;
        for i in 0..n {
            r += self.g_dm(m[i]) * z[n + i] * m[i];
        }
        r = (r / n as f64).abs();

        OracleSolution {
            u,
            m,
            hbar: x[2 * n],
            residual_norm: norm,
            c: z[2 * n],
            bbar,
            r,
        }
    }
}
