//! Exact linear semigroup and heat kernels on periodic grids.
//!
//! Everything here rides on the Fourier symbol `m(ξ) = a|ξ|² + b|ξ|^{2s}`:
//! the semigroup multiplies mode `ξ_k` by `e^{-m(ξ_k) t}`, the generator by
//! `-m(ξ_k)`, and the heat kernels are inverse transforms of the multiplier
//! itself. The symbol is exact on the torus; the only approximation relative
//! to the full space is the periodic truncation, which the kernel-tail check
//! quantifies (fractional tails decay polynomially, so box size is the
//! accuracy knob).

use crate::error::{MixheatError, Result};
use crate::grid::{Field, SpectralGrid};
use crate::operator::OperatorParams;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Default absolute tolerance for kernel values at the box boundary.
pub const DEFAULT_TAIL_TOL: f64 = 1e-10;

/// FFT plans for one grid size (forward/inverse, unnormalized).
pub struct Transform {
    grid: SpectralGrid,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Transform {
    pub fn new(grid: SpectralGrid) -> Self {
        let mut planner = FftPlanner::new();
        let n = grid.points_per_axis();
        Transform {
            grid,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn grid(&self) -> SpectralGrid {
        self.grid
    }

    fn run_axes(&self, buf: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.grid.points_per_axis();
        match self.grid.dim() {
            1 => fft.process(buf),
            _ => {
                // rows
                for row in buf.chunks_exact_mut(n) {
                    fft.process(row);
                }
                // columns via gather/scatter
                let mut col = vec![Complex64::default(); n];
                for j in 0..n {
                    for i in 0..n {
                        col[i] = buf[i * n + j];
                    }
                    fft.process(&mut col);
                    for i in 0..n {
                        buf[i * n + j] = col[i];
                    }
                }
            }
        }
    }

    /// Forward DFT of a real field (unnormalized).
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> =
            values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.run_axes(&mut buf, &self.fwd);
        buf
    }

    /// Inverse DFT, normalized by `1/n^N`, real part.
    pub fn inverse_real(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        self.run_axes(&mut buf, &self.inv);
        let scale = 1.0 / self.grid.len() as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }

    /// Inverse DFT without normalization, real part.
    pub fn inverse_real_unnormalized(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        self.run_axes(&mut buf, &self.inv);
        buf.iter().map(|c| c.re).collect()
    }
}

/// Symbol values `m(ξ_k)` on the full frequency lattice, flat FFT-bin order.
pub fn symbol_array(params: &OperatorParams, grid: SpectralGrid) -> Vec<f64> {
    let n = grid.points_per_axis();
    let axis: Vec<f64> = (0..n).map(|k| grid.frequency(k)).collect();
    match grid.dim() {
        1 => axis.iter().map(|&f| params.symbol_from_sq(f * f)).collect(),
        _ => {
            let mut out = Vec::with_capacity(n * n);
            for &fi in &axis {
                for &fj in &axis {
                    out.push(params.symbol_from_sq(fi * fi + fj * fj));
                }
            }
            out
        }
    }
}

fn apply_multiplier(transform: &Transform, values: &[f64], mult: &[f64]) -> Vec<f64> {
    let mut freq = transform.forward(values);
    for (c, &m) in freq.iter_mut().zip(mult) {
        *c *= m;
    }
    transform.inverse_real(freq)
}

/// `S(t) u`: evolve a field by the exact linear semigroup for time `t ≥ 0`.
pub fn apply_semigroup(params: &OperatorParams, u: &Field, t: f64) -> Result<Field> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(MixheatError::InvalidParams(format!("semigroup time must be >= 0 (got {t})")));
    }
    if !u.is_finite() {
        return Err(MixheatError::NonFinite { context: "apply_semigroup input" });
    }
    let transform = Transform::new(u.grid());
    let mult: Vec<f64> =
        symbol_array(params, u.grid()).iter().map(|m| (-m * t).exp()).collect();
    Field::new(u.grid(), apply_multiplier(&transform, u.values(), &mult))
}

/// `L u = a Δu - b (-Δ)^s u` via the multiplier `-m(ξ)`.
pub fn apply_generator(params: &OperatorParams, u: &Field) -> Result<Field> {
    if !u.is_finite() {
        return Err(MixheatError::NonFinite { context: "apply_generator input" });
    }
    let transform = Transform::new(u.grid());
    let mult: Vec<f64> = symbol_array(params, u.grid()).iter().map(|m| -m).collect();
    Field::new(u.grid(), apply_multiplier(&transform, u.values(), &mult))
}

/// Kernel value at the box boundary versus an absolute tolerance.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TailDiagnostic {
    pub boundary_value: f64,
    pub tol: f64,
    pub valid: bool,
}

fn kernel_values(params: &OperatorParams, grid: SpectralGrid, t: f64) -> Vec<f64> {
    let transform = Transform::new(grid);
    let n = grid.points_per_axis();
    let symbols = symbol_array(params, grid);
    // K_j = (2L)^{-N} Σ_k e^{-m(ξ_k)t} (-1)^{k₁+…} e^{2πi k·j/n}; the parity
    // factor carries the phase of the node offset x₀ = -L.
    let mut freq = Vec::with_capacity(symbols.len());
    for (flat, &m) in symbols.iter().enumerate() {
        let parity = match grid.dim() {
            1 => flat,
            _ => flat / n + flat % n,
        };
        let sign = if parity % 2 == 0 { 1.0 } else { -1.0 };
        freq.push(Complex64::new(sign * (-m * t).exp(), 0.0));
    }
    let vals = transform.inverse_real_unnormalized(freq);
    let scale = (2.0 * grid.half_width()).powi(grid.dim() as i32).recip();
    vals.into_iter().map(|v| v * scale).collect()
}

/// Check the kernel tail at the box boundary without failing.
pub fn kernel_tail_diagnostic(
    params: &OperatorParams,
    grid: SpectralGrid,
    t: f64,
    tol: f64,
) -> TailDiagnostic {
    let vals = kernel_values(params, grid, t);
    // node 0 is the (-L, …) corner, farthest from the origin
    let boundary_value = vals[0].abs();
    TailDiagnostic { boundary_value, tol, valid: boundary_value <= tol }
}

/// Mixed heat kernel `K_{a,b}(·, t)` on the grid.
///
/// Errors with a grid-too-small diagnostic when the kernel value at the box
/// boundary exceeds `tail_tol` (absolute).
pub fn mixed_kernel_with_tol(
    params: &OperatorParams,
    grid: SpectralGrid,
    t: f64,
    tail_tol: f64,
) -> Result<Field> {
    if !(t.is_finite() && t > 0.0) {
        return Err(MixheatError::InvalidParams(format!("kernel time must be > 0 (got {t})")));
    }
    let vals = kernel_values(params, grid, t);
    let boundary = vals[0].abs();
    if boundary > tail_tol {
        return Err(MixheatError::GridTooSmall { boundary, tol: tail_tol });
    }
    Field::new(grid, vals)
}

/// Mixed heat kernel with the default tail tolerance.
pub fn mixed_kernel(params: &OperatorParams, grid: SpectralGrid, t: f64) -> Result<Field> {
    mixed_kernel_with_tol(params, grid, t, DEFAULT_TAIL_TOL)
}

/// Fractional heat kernel `K_s(·, t)`, multiplier `e^{-b t |ξ|^{2s}}`.
pub fn fractional_kernel_with_tol(
    s: f64,
    b: f64,
    grid: SpectralGrid,
    t: f64,
    tail_tol: f64,
) -> Result<Field> {
    let params = OperatorParams::new(0.0, b, s)?;
    mixed_kernel_with_tol(&params, grid, t, tail_tol)
}

pub fn fractional_kernel(s: f64, b: f64, grid: SpectralGrid, t: f64) -> Result<Field> {
    fractional_kernel_with_tol(s, b, grid, t, DEFAULT_TAIL_TOL)
}

/// Radial samples of the self-similar profile `F` with
/// `K_s(x, t) = t^{-N/2s} F(x t^{-1/2s})`, obtained from the t = 1 kernel.
#[derive(Debug, Clone)]
pub struct KernelProfile {
    pub s: f64,
    pub dim: usize,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
}

impl KernelProfile {
    /// Sample `F` on `[0, L)` from the fractional kernel at t = 1.
    pub fn sample(s: f64, b: f64, grid: SpectralGrid, tail_tol: f64) -> Result<Self> {
        let kernel = fractional_kernel_with_tol(s, b, grid, 1.0, tail_tol)?;
        let n = grid.points_per_axis();
        let (radii, values): (Vec<f64>, Vec<f64>) = match grid.dim() {
            1 => (n / 2..n)
                .map(|j| (grid.coordinate(j), kernel.values()[j]))
                .unzip(),
            _ => {
                // positive x-axis row at y = 0
                let j0 = n / 2;
                (n / 2..n)
                    .map(|i| (grid.coordinate(i), kernel.values()[i * n + j0]))
                    .unzip()
            }
        };
        let profile = KernelProfile { s, dim: grid.dim(), radii, values };
        profile.validate()?;
        Ok(profile)
    }

    /// `F(0)`, the sup norm of the unit-time kernel. This is the constant in
    /// the decay estimate ‖u(·,t)‖_∞ ≤ C t^{-N/2s} ‖u₀‖₁.
    pub fn peak(&self) -> f64 {
        self.values[0]
    }

    fn validate(&self) -> Result<()> {
        if self.values.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
            return Err(MixheatError::Numerical(
                "kernel profile must be positive and bounded".into(),
            ));
        }
        // radially non-increasing up to rounding and spectral-truncation ringing
        let peak = self.peak();
        for w in self.values.windows(2) {
            if w[1] > w[0] + 1e-8 * peak {
                return Err(MixheatError::Numerical(
                    "kernel profile is not radially non-increasing".into(),
                ));
            }
        }
        Ok(())
    }
}
