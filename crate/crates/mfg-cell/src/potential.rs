//! Potential families V(y, m) = v(y) + coupling(m).
//!
//! The periodic part is v(y) = A(1 + ½(sin 2πy + cos 4πy)); the coupling is
//! evaluated at the scaled density αm, so the same assembly code serves both
//! the power case V(y, αm) = v(y) + (αm)^q and the logarithmic case
//! V(y, αm) = v(y) + log(αm).

use std::f64::consts::PI;

use crate::error::PotentialError;
use crate::grid::TorusGrid;

/// Coupling nonlinearity in the density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coupling {
    /// m ↦ (αm)^q with q > 0.
    Power { q: f64 },
    /// m ↦ log(αm), requires α > 0 and m > 0.
    Log,
}

/// Potential specification: coupling kind, amplitude A of the periodic part,
/// and an optional tabulated replacement for the analytic v.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    pub coupling: Coupling,
    pub amplitude: f64,
    pub v_override: Option<Vec<f64>>,
}

impl PotentialSpec {
    pub fn power(q: f64, amplitude: f64) -> Self {
        Self {
            coupling: Coupling::Power { q },
            amplitude,
            v_override: None,
        }
    }

    pub fn log(amplitude: f64) -> Self {
        Self {
            coupling: Coupling::Log,
            amplitude,
            v_override: None,
        }
    }

    pub fn with_v_override(mut self, v: Vec<f64>) -> Self {
        self.v_override = Some(v);
        self
    }

    pub fn is_log(&self) -> bool {
        matches!(self.coupling, Coupling::Log)
    }

    /// Exponent of the power coupling, if any.
    pub fn power_exponent(&self) -> Option<f64> {
        match self.coupling {
            Coupling::Power { q } => Some(q),
            Coupling::Log => None,
        }
    }

    pub fn validate(&self) -> Result<(), PotentialError> {
        if let Coupling::Power { q } = self.coupling {
            if !(q > 0.0) {
                return Err(PotentialError::SingularAtZero);
            }
        }
        if self.amplitude < 0.0 {
            return Err(PotentialError::NegativePotential {
                index: 0,
                value: self.amplitude,
            });
        }
        Ok(())
    }

    /// Analytic periodic part v(y) = A(1 + ½(sin 2πy + cos 4πy)).
    pub fn eval_v(&self, y: f64) -> f64 {
        self.amplitude * (1.0 + 0.5 * ((2.0 * PI * y).sin() + (4.0 * PI * y).cos()))
    }

    /// Sample v at the grid nodes, honoring the tabulated override if set.
    pub fn sample_v(&self, grid: &TorusGrid) -> Result<Vec<f64>, PotentialError> {
        let v = match &self.v_override {
            Some(tab) => {
                if tab.len() != grid.n() {
                    return Err(PotentialError::OverrideLength {
                        got: tab.len(),
                        expected: grid.n(),
                    });
                }
                tab.clone()
            }
            None => grid.nodes().iter().map(|&y| self.eval_v(y)).collect(),
        };
        for (i, &x) in v.iter().enumerate() {
            if x < 0.0 {
                return Err(PotentialError::NegativePotential { index: i, value: x });
            }
        }
        Ok(v)
    }

    /// Coupling term evaluated at the scaled density: (αm)^q or log(αm).
    pub fn eval_coupling(&self, m: f64, alpha: f64) -> Result<f64, PotentialError> {
        match self.coupling {
            Coupling::Power { q } => {
                if alpha < 0.0 {
                    return Err(PotentialError::NonPositiveAlpha(alpha));
                }
                if m <= 0.0 && alpha > 0.0 {
                    return Err(PotentialError::NonPositiveDensity(m));
                }
                Ok(power_coupling(m, alpha, q))
            }
            Coupling::Log => {
                if alpha <= 0.0 {
                    return Err(PotentialError::NonPositiveAlpha(alpha));
                }
                if m <= 0.0 {
                    return Err(PotentialError::NonPositiveDensity(m));
                }
                Ok((alpha * m).ln())
            }
        }
    }

    /// Derivative of [`eval_coupling`] in m: q α^q m^{q-1} or 1/m.
    ///
    /// This equals α·V_m(y, αm), the factor appearing in the linearized
    /// system and in the structure residual.
    pub fn eval_coupling_dm(&self, m: f64, alpha: f64) -> Result<f64, PotentialError> {
        match self.coupling {
            Coupling::Power { q } => {
                if alpha < 0.0 {
                    return Err(PotentialError::NonPositiveAlpha(alpha));
                }
                if m <= 0.0 && alpha > 0.0 {
                    if q < 1.0 {
                        return Err(PotentialError::SingularAtZero);
                    }
                    return Err(PotentialError::NonPositiveDensity(m));
                }
                Ok(power_coupling_dm(m, alpha, q))
            }
            Coupling::Log => {
                if alpha <= 0.0 {
                    return Err(PotentialError::NonPositiveAlpha(alpha));
                }
                if m <= 0.0 {
                    return Err(PotentialError::NonPositiveDensity(m));
                }
                Ok(1.0 / m)
            }
        }
    }
}

#[inline]
pub(crate) fn power_coupling(m: f64, alpha: f64, q: f64) -> f64 {
    (alpha * m).powf(q)
}

#[inline]
pub(crate) fn power_coupling_dm(m: f64, alpha: f64, q: f64) -> f64 {
    if alpha == 0.0 {
        return 0.0;
    }
    q * alpha.powf(q) * m.powf(q - 1.0)
}
