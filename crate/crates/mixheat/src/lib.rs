//! Numerical laboratory for the mixed local-nonlocal heat equation
//!
//!   u_t = a Δu - b (-Δ)^s u + u^p
//!
//! The operator `a Δ - b (-Δ)^s` combines classical and fractional
//! diffusion. On periodic boxes the linear semigroup is applied exactly
//! through its Fourier multiplier; on bounded domains the operator is
//! discretized with a singular-integral quadrature under the zero
//! exterior condition. On top of the linear machinery sit a
//! mild-solution semilinear solver with blow-up detection, principal
//! Dirichlet eigenpairs, Kaplan blow-up certificates, Fujita-exponent
//! phase sweeps and blow-up rate diagnostics.

pub mod blowup;
pub mod cauchy;
pub mod config;
pub mod dirichlet;
pub mod error;
pub mod grid;
pub mod operator;
pub mod plot;
pub mod report;
pub mod spectral;
pub mod stepper;
pub mod sweep;

pub use error::MixheatError;
pub use grid::{Field, SpectralGrid};
pub use operator::OperatorParams;
pub use stepper::{RunReport, StepControls, Verdict};

/// Fractional Fujita exponent `p_F^s = 1 + 2s/N`.
pub fn fujita_exponent(s: f64, dim: usize) -> f64 {
    1.0 + 2.0 * s / dim as f64
}
