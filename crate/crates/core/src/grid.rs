//! Periodic-box discretization: the lattice of grid points and integer
//! frequencies shared by every field in the simulation.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{CoreError, Result};

/// Uniform periodic grid on `[0, L)^n` with `N` points per dimension.
///
/// Physical wavenumbers are `xi_k = 2 pi k / L` for signed lattice indices
/// `k in {-N/2, ..., N/2 - 1}` per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n_dims: usize,
    points_per_dim: usize,
    period: f64,
}

impl Grid {
    pub const MIN_POINTS: usize = 16;

    /// Default box size, large enough that several dyadic shells fit
    /// below the dealiasing cutoff.
    pub const DEFAULT_PERIOD: f64 = 2.0 * PI * 16.0;

    pub fn new(n_dims: usize, points_per_dim: usize, period: f64) -> Result<Self> {
        if !(2..=3).contains(&n_dims) {
            return Err(CoreError::InvalidGrid(format!(
                "n_dims must be 2 or 3, got {n_dims}"
            )));
        }
        if points_per_dim < Self::MIN_POINTS || !points_per_dim.is_power_of_two() {
            return Err(CoreError::InvalidGrid(format!(
                "points_per_dim must be a power of two >= {}, got {}",
                Self::MIN_POINTS,
                points_per_dim
            )));
        }
        if !(period > 0.0) || !period.is_finite() {
            return Err(CoreError::InvalidGrid(format!(
                "period must be a positive finite real, got {period}"
            )));
        }
        Ok(Self {
            n_dims,
            points_per_dim,
            period,
        })
    }

    pub fn default_2d(points_per_dim: usize) -> Result<Self> {
        Self::new(2, points_per_dim, Self::DEFAULT_PERIOD)
    }

    #[inline]
    pub fn n_dims(&self) -> usize {
        self.n_dims
    }

    #[inline]
    pub fn points_per_dim(&self) -> usize {
        self.points_per_dim
    }

    #[inline]
    pub fn period(&self) -> f64 {
        self.period
    }

    /// Grid spacing `L / N`.
    #[inline]
    pub fn spacing(&self) -> f64 {
        self.period / self.points_per_dim as f64
    }

    /// Quadrature weight of one cell, `(L/N)^n`.
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.n_dims as i32)
    }

    /// Total number of lattice points `N^n`.
    #[inline]
    pub fn total_points(&self) -> usize {
        self.points_per_dim.pow(self.n_dims as u32)
    }

    /// Smallest nonzero wavenumber `2 pi / L`.
    #[inline]
    pub fn fundamental_wavenumber(&self) -> f64 {
        2.0 * PI / self.period
    }

    /// Signed lattice index for a storage index along one axis.
    #[inline]
    pub fn signed_index(&self, i: usize) -> i64 {
        let n = self.points_per_dim as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Storage index of the negated frequency along one axis (`-k mod N`).
    #[inline]
    pub fn negated_index(&self, i: usize) -> usize {
        if i == 0 {
            0
        } else {
            self.points_per_dim - i
        }
    }

    /// Physical wavenumber along one axis for a storage index.
    #[inline]
    pub fn wavenumber(&self, i: usize) -> f64 {
        self.fundamental_wavenumber() * self.signed_index(i) as f64
    }

    /// Decompose a flat lattice index into per-axis storage indices.
    #[inline]
    pub fn unflatten(&self, flat: usize) -> [usize; 3] {
        let n = self.points_per_dim;
        match self.n_dims {
            2 => [flat / n, flat % n, 0],
            _ => [flat / (n * n), (flat / n) % n, flat % n],
        }
    }

    #[inline]
    pub fn flatten(&self, idx: [usize; 3]) -> usize {
        let n = self.points_per_dim;
        match self.n_dims {
            2 => idx[0] * n + idx[1],
            _ => (idx[0] * n + idx[1]) * n + idx[2],
        }
    }

    /// Wavevector at a flat lattice index (axes beyond `n_dims` are zero).
    #[inline]
    pub fn wavevector(&self, flat: usize) -> [f64; 3] {
        let idx = self.unflatten(flat);
        let mut xi = [0.0; 3];
        for a in 0..self.n_dims {
            xi[a] = self.wavenumber(idx[a]);
        }
        xi
    }

    /// `|xi|^2` at a flat lattice index.
    #[inline]
    pub fn xi_norm2(&self, flat: usize) -> f64 {
        let xi = self.wavevector(flat);
        xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]
    }

    /// Physical position of a flat lattice index.
    #[inline]
    pub fn position(&self, flat: usize) -> [f64; 3] {
        let idx = self.unflatten(flat);
        let h = self.spacing();
        let mut x = [0.0; 3];
        for a in 0..self.n_dims {
            x[a] = idx[a] as f64 * h;
        }
        x
    }

    /// Largest retained signed index under the 2/3 rule.
    #[inline]
    pub fn dealias_max_index(&self) -> i64 {
        (self.points_per_dim / 3) as i64
    }

    /// Axis wavenumber of the 2/3-rule cutoff, `(2 pi / L) * floor(N/3)`.
    #[inline]
    pub fn dealias_cutoff(&self) -> f64 {
        self.fundamental_wavenumber() * self.dealias_max_index() as f64
    }

    /// Nyquist wavenumber `(2 pi / L) * N/2`.
    #[inline]
    pub fn nyquist(&self) -> f64 {
        self.fundamental_wavenumber() * (self.points_per_dim / 2) as f64
    }

    /// Whether the mode at `flat` survives the 2/3-rule mask.
    #[inline]
    pub fn dealias_keep(&self, flat: usize) -> bool {
        let idx = self.unflatten(flat);
        let kmax = self.dealias_max_index();
        (0..self.n_dims).all(|a| self.signed_index(idx[a]).abs() <= kmax)
    }

    /// Flat index of the conjugate (negated) frequency.
    #[inline]
    pub fn conjugate_flat(&self, flat: usize) -> usize {
        let idx = self.unflatten(flat);
        let mut neg = [0usize; 3];
        for a in 0..self.n_dims {
            neg[a] = self.negated_index(idx[a]);
        }
        self.flatten(neg)
    }

    /// Minimum-image displacement between two positions along one axis.
    #[inline]
    pub fn min_image(&self, dx: f64) -> f64 {
        let l = self.period;
        let mut d = dx % l;
        if d > l / 2.0 {
            d -= l;
        } else if d < -l / 2.0 {
            d += l;
        }
        d
    }

    /// FFT dimension list (row-major, axis 0 slowest).
    pub fn dims(&self) -> Vec<usize> {
        vec![self.points_per_dim; self.n_dims]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_parameters() {
        assert!(Grid::new(2, 24, 1.0).is_err());
        assert!(Grid::new(2, 8, 1.0).is_err());
        assert!(Grid::new(4, 32, 1.0).is_err());
        assert!(Grid::new(2, 32, 0.0).is_err());
        assert!(Grid::new(2, 32, 1.0).is_ok());
    }

    #[test]
    fn signed_indices_cover_expected_range() {
        let g = Grid::new(2, 16, 2.0 * PI).unwrap();
        let signed: Vec<i64> = (0..16).map(|i| g.signed_index(i)).collect();
        assert_eq!(signed[0], 0);
        assert_eq!(signed[7], 7);
        assert_eq!(signed[8], -8);
        assert_eq!(signed[15], -1);
        // With L = 2 pi the wavenumber equals the signed index.
        assert!((g.wavenumber(3) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn conjugate_index_is_involutive() {
        let g = Grid::new(2, 16, 1.0).unwrap();
        for flat in 0..g.total_points() {
            assert_eq!(g.conjugate_flat(g.conjugate_flat(flat)), flat);
        }
    }

    #[test]
    fn min_image_wraps() {
        let g = Grid::new(2, 16, 10.0).unwrap();
        assert!((g.min_image(9.0) - (-1.0)).abs() < 1e-12);
        assert!((g.min_image(-7.0) - 3.0).abs() < 1e-12);
        assert!((g.min_image(4.0) - 4.0).abs() < 1e-12);
    }
}
