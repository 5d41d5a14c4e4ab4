//! Uniform periodic grid on the 1-D torus [0,1) and its discrete operators.
//!
//! Grid functions are plain `Vec<f64>`/`&[f64]` with one value per node
//! y_i = i/N. All index arithmetic is modulo N. The operators here are the
//! building blocks of the cell-problem discretization:
//!
//! - `laplacian`: second-order centered stencil (f_{i+1} - 2 f_i + f_{i-1})/h²
//! - `centered_gradient`: (f_{i+1} - f_{i-1})/(2h), used only in quadratures
//! - `godunov_hamiltonian`: monotone upwind approximation of ½|u_y + P|²
//! - `quadrature`: trapezoid rule, which on a uniform periodic grid is the mean

use crate::error::GridError;

/// Minimum node count accepted by [`TorusGrid::new`].
pub const MIN_NODES: usize = 8;

/// Uniform periodic grid with `n` nodes y_i = i·h, h = 1/n.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusGrid {
    n: usize,
    h: f64,
    nodes: Vec<f64>,
}

impl TorusGrid {
    /// Build a grid with `n >= 8` nodes.
    pub fn new(n: usize) -> Result<Self, GridError> {
        if n < MIN_NODES {
            return Err(GridError::TooCoarse(n));
        }
        let h = 1.0 / n as f64;
        let nodes = (0..n).map(|i| i as f64 * h).collect();
        Ok(Self { n, h, nodes })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Node index to the left (periodic).
    #[inline]
    pub fn prev(&self, i: usize) -> usize {
        if i == 0 {
            self.n - 1
        } else {
            i - 1
        }
    }

    /// Node index to the right (periodic).
    #[inline]
    pub fn next(&self, i: usize) -> usize {
        if i + 1 == self.n {
            0
        } else {
            i + 1
        }
    }
}

/// Forward differences d_i = f_{i+1} - f_i (periodic).
///
/// The Laplacian and the upwind terms are assembled from these first
/// differences; for smooth data the subtraction of nearby values is exact or
/// nearly so, which keeps the residual floor at the representation level
/// rather than the 1/h² rounding level.
pub fn forward_differences(grid: &TorusGrid, f: &[f64]) -> Vec<f64> {
    assert_eq!(f.len(), grid.n(), "grid function length mismatch");
    (0..grid.n()).map(|i| f[grid.next(i)] - f[i]).collect()
}

/// Centered second difference (f_{i+1} - 2 f_i + f_{i-1})/h².
pub fn laplacian(grid: &TorusGrid, f: &[f64]) -> Vec<f64> {
    let d = forward_differences(grid, f);
    let h2 = grid.h() * grid.h();
    (0..grid.n()).map(|i| (d[i] - d[grid.prev(i)]) / h2).collect()
}

/// Centered first difference (f_{i+1} - f_{i-1})/(2h).
pub fn centered_gradient(grid: &TorusGrid, f: &[f64]) -> Vec<f64> {
    assert_eq!(f.len(), grid.n(), "grid function length mismatch");
    let two_h = 2.0 * grid.h();
    (0..grid.n())
        .map(|i| (f[grid.next(i)] - f[grid.prev(i)]) / two_h)
        .collect()
}

/// Godunov numerical Hamiltonian for ½|u_y + P|².
///
/// With one-sided differences p⁻_i = (U_i - U_{i-1})/h and
/// p⁺_i = (U_{i+1} - U_i)/h,
///
/// ```text
/// g(p⁻, p⁺; P) = ½ [ max(p⁻ + P, 0)² + min(p⁺ + P, 0)² ]
/// ```
///
/// g is nondecreasing in p⁻ and nonincreasing in p⁺, hence monotone in the
/// upwind sense: nonincreasing in U_{i±1}, nondecreasing in U_i.
pub fn godunov_hamiltonian(grid: &TorusGrid, u: &[f64], p: f64) -> Vec<f64> {
    let d = forward_differences(grid, u);
    let h = grid.h();
    (0..grid.n())
        .map(|i| {
            let pm = d[grid.prev(i)] / h;
            let pp = d[i] / h;
            let a = (pm + p).max(0.0);
            let b = (pp + p).min(0.0);
            0.5 * (a * a + b * b)
        })
        .collect()
}

/// Trapezoid quadrature over the torus: h·Σ f_i, i.e. the mean of the values.
///
/// Computed as Σ f_i / N so that constants integrate exactly.
pub fn quadrature(grid: &TorusGrid, f: &[f64]) -> f64 {
    assert_eq!(f.len(), grid.n(), "grid function length mismatch");
    f.iter().sum::<f64>() / grid.n() as f64
}
