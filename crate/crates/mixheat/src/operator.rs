//! The mixed diffusion operator `L = a Δ - b (-Δ)^s` through its Fourier symbol.

use crate::error::{MixheatError, Result};
use serde::{Deserialize, Serialize};

/// Coefficients of the mixed operator `L = a Δ - b (-Δ)^s`.
///
/// `a` has dimension length²/time, `b` length^{2s}/time, and the
/// fractional order satisfies `0 < s < 1`. At least one of `a`, `b`
/// must be positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorParams {
    pub a: f64,
    pub b: f64,
    pub s: f64,
}

impl OperatorParams {
    pub fn new(a: f64, b: f64, s: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && s.is_finite()) {
            return Err(MixheatError::InvalidParams(
                "operator coefficients must be finite".into(),
            ));
        }
        if a < 0.0 || b < 0.0 {
            return Err(MixheatError::InvalidParams(format!(
                "diffusivities must be non-negative (a = {a}, b = {b})"
            )));
        }
        if a + b <= 0.0 {
            return Err(MixheatError::InvalidParams(
                "at least one of a, b must be positive".into(),
            ));
        }
        if s <= 0.0 || s >= 1.0 {
            return Err(MixheatError::InvalidParams(format!(
                "fractional order must satisfy 0 < s < 1 (s = {s})"
            )));
        }
        Ok(Self { a, b, s })
    }

    /// Fourier symbol `m(ξ) = a|ξ|² + b|ξ|^{2s}` of `-L`.
    pub fn symbol(&self, xi: &[f64]) -> f64 {
        let r2: f64 = xi.iter().map(|x| x * x).sum();
        self.symbol_from_sq(r2)
    }

    /// Symbol evaluated from `|ξ|²` (avoids recomputing the norm on grids).
    #[inline]
    pub fn symbol_from_sq(&self, xi_sq: f64) -> f64 {
        // |ξ|^{2s} = (|ξ|²)^s; at ξ = 0 both terms vanish.
        let frac = if xi_sq == 0.0 { 0.0 } else { xi_sq.powf(self.s) };
        self.a * xi_sq + self.b * frac
    }

    /// The pure-local and pure-nonlocal parts of the same operator.
    pub fn local_part(&self) -> Self {
        Self { a: self.a, b: 0.0, s: self.s }
    }

    pub fn nonlocal_part(&self) -> Self {
        Self { a: 0.0, b: self.b, s: self.s }
    }
}
