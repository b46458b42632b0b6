//! Uniform periodic grids and real-valued fields on them.

use crate::error::{MixheatError, Result};
use serde::{Deserialize, Serialize};

/// Uniform periodic grid on the box `[-L, L)^N` with `n` points per axis.
///
/// The frequency lattice is `ξ_k = π k / L` for `k ∈ {-n/2, …, n/2-1}`
/// per axis (stored in FFT bin order: `0, 1, …, n/2-1, -n/2, …, -1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    dim: usize,
    half_width: f64,
    points_per_axis: usize,
}

impl SpectralGrid {
    pub fn new(dim: usize, half_width: f64, points_per_axis: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(MixheatError::InvalidParams(format!(
                "spatial dimension must be 1 or 2 (got {dim})"
            )));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(MixheatError::InvalidParams(format!(
                "half width must be positive (got {half_width})"
            )));
        }
        let n = points_per_axis;
        if n < 8 || !n.is_power_of_two() {
            return Err(MixheatError::InvalidParams(format!(
                "points per axis must be a power of two >= 8 (got {n})"
            )));
        }
        Ok(Self { dim, half_width, points_per_axis })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    /// Grid spacing `h = 2L/n`.
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points_per_axis as f64
    }

    /// Total number of nodes `n^N`.
    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Cell volume `h^N`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Coordinate of node `j` along one axis: `x_j = -L + j h`.
    pub fn coordinate(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.spacing()
    }

    /// Frequency of FFT bin `k` along one axis.
    pub fn frequency(&self, k: usize) -> f64 {
        let n = self.points_per_axis;
        let k = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
        std::f64::consts::PI * k / self.half_width
    }

    /// Flat index decomposed into per-axis indices (row-major).
    pub fn axis_indices(&self, flat: usize) -> [usize; 2] {
        match self.dim {
            1 => [flat, 0],
            _ => [flat / self.points_per_axis, flat % self.points_per_axis],
        }
    }

    /// Node position for a flat index; the second component is 0 in 1D.
    pub fn position(&self, flat: usize) -> [f64; 2] {
        let [i, j] = self.axis_indices(flat);
        match self.dim {
            1 => [self.coordinate(i), 0.0],
            _ => [self.coordinate(i), self.coordinate(j)],
        }
    }

    /// Squared distance of a node to the origin.
    pub fn radius_sq(&self, flat: usize) -> f64 {
        let [x, y] = self.position(flat);
        x * x + y * y
    }
}

/// Real-valued samples on a [`SpectralGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: SpectralGrid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: SpectralGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(MixheatError::MeshMismatch(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(MixheatError::NonFinite { context: "field construction" });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: SpectralGrid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: SpectralGrid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    /// Sample a function of position on the grid.
    pub fn from_fn(grid: SpectralGrid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.position(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> SpectralGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Discrete mass `h^N Σ values`.
    pub fn mass(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().sum::<f64>()
    }

    /// Max norm.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Discrete L¹ norm `h^N Σ |values|`.
    pub fn l1_norm(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().map(|v| v.abs()).sum::<f64>()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.values {
            *v *= c;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(SpectralGrid::new(1, 1.0, 7).is_err());
        assert!(SpectralGrid::new(1, 1.0, 12).is_err());
        assert!(SpectralGrid::new(3, 1.0, 16).is_err());
        assert!(SpectralGrid::new(1, 0.0, 16).is_err());
        assert!(SpectralGrid::new(2, 4.0, 16).is_ok());
    }

    #[test]
    fn frequency_lattice_symmetric_except_nyquist() {
        let g = SpectralGrid::new(1, 2.0, 16).unwrap();
        // bins 1..n/2-1 pair with bins n-1..n/2+1
        for k in 1..8 {
            assert!((g.frequency(k) + g.frequency(16 - k)).abs() < 1e-15);
        }
        // Nyquist bin has no positive partner
        assert!(g.frequency(8) < 0.0);
        assert_eq!(g.frequency(0), 0.0);
    }

    #[test]
    fn mass_of_constant_field() {
        let g = SpectralGrid::new(1, 2.0, 16).unwrap();
        let f = Field::constant(g, 3.0);
        // h n = 2L, so mass = 3 * 2L
        assert!((f.mass() - 12.0).abs() < 1e-12);

        let g2 = SpectralGrid::new(2, 1.0, 8).unwrap();
        let f2 = Field::constant(g2, 1.0);
        assert!((f2.mass() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn positions_2d_row_major() {
        let g = SpectralGrid::new(2, 1.0, 8).unwrap();
        let h = g.spacing();
        let p = g.position(8 + 2); // i = 1, j = 2
        assert!((p[0] - (-1.0 + h)).abs() < 1e-15);
        assert!((p[1] - (-1.0 + 2.0 * h)).abs() < 1e-15);
    }

    #[test]
    fn field_rejects_non_finite() {
        let g = SpectralGrid::new(1, 1.0, 8).unwrap();
        assert!(Field::new(g, vec![f64::NAN; 8]).is_err());
        assert!(Field::new(g, vec![0.0; 7]).is_err());
    }
}
