//! Cauchy problems on the periodic box: exact linear evolution, decay and
//! asymptotics diagnostics, the semilinear problem, and the global-existence
//! certificate for supercritical exponents.

use crate::error::{MixheatError, Result};
use crate::fujita_exponent;
use crate::grid::{Field, SpectralGrid};
use crate::operator::OperatorParams;
use crate::spectral::{
    apply_semigroup, fractional_kernel_with_tol, kernel_tail_diagnostic, symbol_array, Transform,
};
use crate::stepper::{solve_semilinear, PeriodicPropagator, RunReport, StepControls};
use serde::{Deserialize, Serialize};

/// Semilinear Cauchy problem `u_t = L u + u^p` with non-negative data.
#[derive(Debug, Clone)]
pub struct CauchyProblem {
    pub params: OperatorParams,
    pub p: f64,
    pub u0: Field,
}

impl CauchyProblem {
    pub fn new(params: OperatorParams, p: f64, u0: Field) -> Result<Self> {
        if p <= 1.0 {
            return Err(MixheatError::InvalidParams(format!("p must exceed 1 (got {p})")));
        }
        if u0.min() < -1e-12 * u0.sup_norm().max(1.0) {
            return Err(MixheatError::InvalidParams("u0 must be non-negative".into()));
        }
        Ok(CauchyProblem { params, p, u0 })
    }

    pub fn grid(&self) -> SpectralGrid {
        self.u0.grid()
    }
}

/// Evolve the linear problem, returning one field per requested time.
///
/// A single forward transform of the data is reused for every output time,
/// so each extra time costs one multiplier sweep and one inverse transform.
pub fn solve_linear(params: &OperatorParams, u0: &Field, t_list: &[f64]) -> Result<Vec<Field>> {
    if t_list.is_empty() {
        return Ok(Vec::new());
    }
    if t_list[0] < 0.0 || t_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(MixheatError::InvalidParams(
            "output times must be non-negative and increasing".into(),
        ));
    }
    if !u0.is_finite() {
        return Err(MixheatError::NonFinite { context: "solve_linear initial data" });
    }
    let grid = u0.grid();
    let transform = Transform::new(grid);
    let symbols = symbol_array(params, grid);
    let base = transform.forward(u0.values());
    let mut out = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let freq: Vec<_> =
            base.iter().zip(&symbols).map(|(c, &m)| c * (-m * t).exp()).collect();
        out.push(Field::new(grid, transform.inverse_real(freq))?);
    }
    Ok(out)
}

/// Least-squares slope of `log ‖u‖_∞` against `log t` over a time window.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit in log space.
    pub residual: f64,
    pub samples: usize,
}

pub fn decay_exponent_fit(
    times: &[f64],
    sup_norms: &[f64],
    window: (f64, f64),
) -> Result<DecayFit> {
    if times.len() != sup_norms.len() {
        return Err(MixheatError::MeshMismatch("times and norms differ in length".into()));
    }
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(sup_norms)
        .filter(|(&t, _)| t >= window.0 && t <= window.1 && t > 0.0)
        .map(|(&t, &m)| (t, m))
        .collect();
    if pts.len() < 8 {
        return Err(MixheatError::TooFewSamples { needed: 8, got: pts.len() });
    }
    if pts.iter().any(|&(_, m)| m <= 0.0) {
        return Err(MixheatError::DegenerateSeries("sup-norm vanishes inside the window".into()));
    }
    let logs: Vec<(f64, f64)> = pts.iter().map(|&(t, m)| (t.ln(), m.ln())).collect();
    let n = logs.len() as f64;
    let sx: f64 = logs.iter().map(|p| p.0).sum();
    let sy: f64 = logs.iter().map(|p| p.1).sum();
    let sxx: f64 = logs.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = logs.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-14 * n * sxx.abs().max(1.0) {
        return Err(MixheatError::DegenerateSeries("window spans a single time scale".into()));
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let residual = (logs
        .iter()
        .map(|&(x, y)| (y - slope * x - intercept).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(DecayFit { slope, intercept, residual, samples: logs.len() })
}

/// `t^{N/2s} ‖u(·,t) - M K_s(·,t)‖_∞` where `M = mass(u0)` and `K_s` is the
/// kernel of the nonlocal part. The large-time limit of this quantity is 0.
pub fn asymptotic_distance(
    params: &OperatorParams,
    u0: &Field,
    t: f64,
    tail_tol: f64,
) -> Result<f64> {
    if t <= 0.0 {
        return Err(MixheatError::InvalidParams("asymptotic distance needs t > 0".into()));
    }
    let grid = u0.grid();
    let mass = u0.mass();
    let u = apply_semigroup(params, u0, t)?;
    let kernel = fractional_kernel_with_tol(params.s, params.b, grid, t, tail_tol)?;
    // solution touching the boundary is the same failure mode as a fat kernel
    let n = grid.points_per_axis();
    let boundary = match grid.dim() {
        1 => u.values()[0].abs(),
        _ => u.values()[0].abs().max(u.values()[n / 2 * n].abs()),
    };
    if boundary > tail_tol * u.sup_norm().max(1.0).max(mass.abs()) {
        return Err(MixheatError::GridTooSmall { boundary, tol: tail_tol });
    }
    let dist = u
        .values()
        .iter()
        .zip(kernel.values())
        .map(|(a, k)| (a - mass * k).abs())
        .fold(0.0, f64::max);
    let exponent = grid.dim() as f64 / (2.0 * params.s);
    Ok(t.powf(exponent) * dist)
}

/// Semilinear Cauchy solve on the periodic grid; attaches the kernel-tail
/// diagnostic for the horizon time to the report.
pub fn solve_cauchy(
    problem: &CauchyProblem,
    controls: &StepControls,
    tail_tol: f64,
) -> Result<RunReport> {
    let grid = problem.grid();
    let mut prop = PeriodicPropagator::new(problem.params, grid);
    let mut report =
        solve_semilinear(&mut prop, problem.p, problem.u0.values(), controls, None)?;
    let t_check = report.times.last().copied().unwrap_or(controls.t_max).max(1e-6);
    report.tail = Some(kernel_tail_diagnostic(&problem.params, grid, t_check, tail_tol));
    Ok(report)
}

/// Global-existence certificate for `p > p_F^s` built from the linear decay
/// estimate ‖v(·,t)‖_∞ ≤ C t^{-N/2s} ‖v₀‖₁.
///
/// `w(x,t) = h(t) v(x, t+t₀)` is a supersolution when
/// `h'/h^p = (C ‖v₀‖₁ (t+t₀)^{-N/2s})^{p-1}` and `h(0) = 1`, which integrates
/// to `h(t) = [1 - D t₀^γ (1 - (t/t₀+1)^γ)]^{-1/(p-1)}` with
/// `γ = 1 - N(p-1)/2s < 0`. The certificate is VALID (h stays finite for all
/// time) exactly when `D t₀^γ < 1`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SupersolutionCertificate {
    pub p: f64,
    pub s: f64,
    pub dim: usize,
    pub c_decay: f64,
    pub l1_norm: f64,
    pub t0: f64,
    /// D = (2s(p-1)/(N(p-1)-2s)) (C ‖v₀‖₁)^{p-1}
    pub d: f64,
    /// γ = 1 - N(p-1)/2s
    pub gamma: f64,
    pub valid: bool,
}

impl SupersolutionCertificate {
    /// Evaluate the rescaling factor `h(t)`; finite for all `t ≥ 0` iff the
    /// certificate is valid.
    pub fn h(&self, t: f64) -> f64 {
        let inner =
            1.0 - self.d * self.t0.powf(self.gamma) * (1.0 - (t / self.t0 + 1.0).powf(self.gamma));
        inner.powf(-1.0 / (self.p - 1.0))
    }
}

pub fn supersolution_certificate(
    p: f64,
    s: f64,
    dim: usize,
    c_decay: f64,
    l1_norm: f64,
    t0: f64,
) -> Result<SupersolutionCertificate> {
    let p_f = fujita_exponent(s, dim);
    if p <= p_f {
        return Err(MixheatError::InvalidParams(format!(
            "certificate requires p > p_F^s = {p_f} (got p = {p})"
        )));
    }
    if !(c_decay > 0.0 && l1_norm >= 0.0 && t0 > 0.0) {
        return Err(MixheatError::InvalidParams(
            "certificate needs C > 0, ‖v₀‖₁ ≥ 0, t₀ > 0".into(),
        ));
    }
    let n = dim as f64;
    let gamma = 1.0 - n * (p - 1.0) / (2.0 * s);
    let d = (2.0 * s * (p - 1.0) / (n * (p - 1.0) - 2.0 * s)) * (c_decay * l1_norm).powf(p - 1.0);
    let valid = d * t0.powf(gamma) < 1.0;
    Ok(SupersolutionCertificate { p, s, dim, c_decay, l1_norm, t0, d, gamma, valid })
}
