//! Multi-component fields stored as Fourier coefficients on a periodic grid.
//!
//! Convention: a field with coefficients `c_k` has physical samples
//! `f(x_j) = sum_k c_k e^{i xi_k . x_j}`, so the inverse transform is the
//! plain unnormalized inverse DFT and the forward transform divides by `N^n`.
//! Real-valued fields carry Hermitian-symmetric coefficients.

use num_complex::Complex64;

use crate::error::{CoreError, Result};
use crate::fft;
use crate::grid::Grid;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    n_components: usize,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: Grid, n_components: usize) -> Self {
        assert!(n_components >= 1, "field needs at least one component");
        Self {
            grid,
            n_components,
            coeffs: vec![Complex64::default(); n_components * grid.total_points()],
        }
    }

    /// Build from raw coefficients (component-major, row-major per component).
    pub fn from_coeffs(grid: Grid, n_components: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != n_components * grid.total_points() {
            return Err(CoreError::InvalidField(format!(
                "expected {} coefficients, got {}",
                n_components * grid.total_points(),
                coeffs.len()
            )));
        }
        let f = Self {
            grid,
            n_components,
            coeffs,
        };
        f.check_finite()?;
        Ok(f)
    }

    /// Forward transform of physical samples (component-major, row-major).
    pub fn from_physical(grid: Grid, n_components: usize, samples: &[f64]) -> Result<Self> {
        let pts = grid.total_points();
        if samples.len() != n_components * pts {
            return Err(CoreError::InvalidField(format!(
                "expected {} samples, got {}",
                n_components * pts,
                samples.len()
            )));
        }
        if !samples.iter().all(|v| v.is_finite()) {
            return Err(CoreError::NonFinite("physical samples"));
        }
        let dims = grid.dims();
        let scale = 1.0 / pts as f64;
        let mut coeffs = vec![Complex64::default(); n_components * pts];
        for c in 0..n_components {
            let dst = &mut coeffs[c * pts..(c + 1) * pts];
            for (d, s) in dst.iter_mut().zip(&samples[c * pts..(c + 1) * pts]) {
                *d = Complex64::new(*s, 0.0);
            }
            fft::forward_nd(&dims, dst);
            for d in dst.iter_mut() {
                *d *= scale;
            }
        }
        Ok(Self {
            grid,
            n_components,
            coeffs,
        })
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn n_components(&self) -> usize {
        self.n_components
    }

    #[inline]
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    #[inline]
    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    #[inline]
    pub fn component(&self, c: usize) -> &[Complex64] {
        let pts = self.grid.total_points();
        &self.coeffs[c * pts..(c + 1) * pts]
    }

    #[inline]
    pub fn component_mut(&mut self, c: usize) -> &mut [Complex64] {
        let pts = self.grid.total_points();
        &mut self.coeffs[c * pts..(c + 1) * pts]
    }

    pub fn check_finite(&self) -> Result<()> {
        if self
            .coeffs
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
        {
            Ok(())
        } else {
            Err(CoreError::NonFinite("spectral coefficients"))
        }
    }

    /// Inverse transform to physical samples; imaginary parts are discarded
    /// (callers maintain Hermitian symmetry for real fields).
    pub fn to_physical(&self) -> Result<Vec<f64>> {
        self.check_finite()?;
        let pts = self.grid.total_points();
        let dims = self.grid.dims();
        let mut out = vec![0.0f64; self.n_components * pts];
        let mut scratch = vec![Complex64::default(); pts];
        for c in 0..self.n_components {
            scratch.copy_from_slice(self.component(c));
            fft::inverse_nd(&dims, &mut scratch);
            for (o, z) in out[c * pts..(c + 1) * pts].iter_mut().zip(&scratch) {
                *o = z.re;
            }
        }
        Ok(out)
    }

    /// Largest deviation from Hermitian symmetry, `max_k |c(-k) - conj(c(k))|`.
    pub fn hermitian_residual(&self) -> f64 {
        let pts = self.grid.total_points();
        let mut worst = 0.0f64;
        for c in 0..self.n_components {
            let comp = self.component(c);
            for flat in 0..pts {
                let conj_flat = self.grid.conjugate_flat(flat);
                let r = (comp[conj_flat] - comp[flat].conj()).norm();
                if r > worst {
                    worst = r;
                }
            }
        }
        worst
    }

    /// Spectral derivative of order `m` along `axis`: multiply by `(i xi)^m`.
    ///
    /// For odd `m` the unpaired Nyquist modes along `axis` are zeroed so real
    /// fields stay real.
    pub fn derivative(&self, axis: usize, order: u32) -> Result<Self> {
        if axis >= self.grid.n_dims() {
            return Err(CoreError::InvalidField(format!(
                "axis {axis} out of range for {}-dimensional grid",
                self.grid.n_dims()
            )));
        }
        if order == 0 {
            return Ok(self.clone());
        }
        let pts = self.grid.total_points();
        let n = self.grid.points_per_dim();
        let nyquist_signed = -((n / 2) as i64);
        let mut out = self.clone();
        // Precompute (i xi)^m per axis storage index.
        let factors: Vec<Complex64> = (0..n)
            .map(|i| {
                if order % 2 == 1 && self.grid.signed_index(i) == nyquist_signed {
                    return Complex64::default();
                }
                Complex64::new(0.0, self.grid.wavenumber(i)).powu(order)
            })
            .collect();
        for c in 0..self.n_components {
            let comp = out.component_mut(c);
            for flat in 0..pts {
                let idx = self.grid.unflatten(flat);
                comp[flat] *= factors[idx[axis]];
            }
        }
        Ok(out)
    }

    /// Gradient: output component `a * n_dims + i` holds `d f^a / d x_i`.
    pub fn gradient(&self) -> Result<Self> {
        let n = self.grid.n_dims();
        let pts = self.grid.total_points();
        let mut out = SpectralField::zeros(self.grid, self.n_components * n);
        for a in 0..self.n_components {
            for i in 0..n {
                let d = self.derivative_of_component(a, i)?;
                out.coeffs[(a * n + i) * pts..(a * n + i + 1) * pts].copy_from_slice(&d);
            }
        }
        Ok(out)
    }

    fn derivative_of_component(&self, c: usize, axis: usize) -> Result<Vec<Complex64>> {
        let pts = self.grid.total_points();
        let n = self.grid.points_per_dim();
        let nyquist_signed = -((n / 2) as i64);
        let comp = self.component(c);
        let mut out = vec![Complex64::default(); pts];
        for flat in 0..pts {
            let idx = self.grid.unflatten(flat);
            if self.grid.signed_index(idx[axis]) == nyquist_signed {
                continue;
            }
            out[flat] = comp[flat] * Complex64::new(0.0, self.grid.wavenumber(idx[axis]));
        }
        Ok(out)
    }

    /// Repeated gradient; output has `n_components * n_dims^m` components.
    pub fn gradient_m(&self, m: u32) -> Result<Self> {
        let mut f = self.clone();
        for _ in 0..m {
            f = f.gradient()?;
        }
        Ok(f)
    }

    /// Multiply every coefficient by a spectral symbol `s(flat)`.
    pub fn apply_symbol(&self, symbol: impl Fn(usize) -> f64 + Sync) -> Self {
        let pts = self.grid.total_points();
        let mut out = self.clone();
        let values: Vec<f64> = (0..pts).map(symbol).collect();
        for c in 0..self.n_components {
            let comp = out.component_mut(c);
            for flat in 0..pts {
                comp[flat] *= values[flat];
            }
        }
        out
    }

    /// Zero every mode outside the 2/3-rule band.
    pub fn dealiased(&self) -> Self {
        let keep: Vec<bool> = (0..self.grid.total_points())
            .map(|flat| self.grid.dealias_keep(flat))
            .collect();
        let mut out = self.clone();
        for c in 0..self.n_components {
            let comp = out.component_mut(c);
            for (z, k) in comp.iter_mut().zip(&keep) {
                if !k {
                    *z = Complex64::default();
                }
            }
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for z in out.coeffs.iter_mut() {
            *z *= s;
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.coeffs.len(), other.coeffs.len());
        let mut out = self.clone();
        for (a, b) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.coeffs.len(), other.coeffs.len());
        let mut out = self.clone();
        for (a, b) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *a -= b;
        }
        out
    }

    pub fn add_scaled(&mut self, other: &Self, s: f64) {
        debug_assert_eq!(self.coeffs.len(), other.coeffs.len());
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b * s;
        }
    }

    /// Mean (zero-frequency) coefficient of a component.
    pub fn mean_mode(&self, c: usize) -> Complex64 {
        self.component(c)[0]
    }

    /// Max over grid points of the pointwise Euclidean magnitude across
    /// components.
    pub fn max_abs_physical(&self) -> Result<f64> {
        let phys = self.to_physical()?;
        let pts = self.grid.total_points();
        let mut worst = 0.0f64;
        for p in 0..pts {
            let mut s = 0.0;
            for c in 0..self.n_components {
                let v = phys[c * pts + p];
                s += v * v;
            }
            worst = worst.max(s);
        }
        Ok(worst.sqrt())
    }

    /// Largest coefficient magnitude.
    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Pointwise Euclidean magnitude of physical samples (component-major input).
pub fn pointwise_magnitude(samples: &[f64], n_components: usize) -> Vec<f64> {
    let pts = samples.len() / n_components;
    let mut out = vec![0.0f64; pts];
    for c in 0..n_components {
        for p in 0..pts {
            let v = samples[c * pts + p];
            out[p] += v * v;
        }
    }
    for o in out.iter_mut() {
        *o = o.sqrt();
    }
    out
}

/// Stress tensor induced by a director field: entry `(i, j)` is
/// `sum_a d_i d^a . d_j d^a`, computed by pointwise physical products of the
/// spectral gradient. Output has `n_dims^2` components, index `i * n + j`.
pub fn stress_tensor(d: &SpectralField) -> Result<SpectralField> {
    if d.n_components() != 3 {
        return Err(CoreError::InvalidField(format!(
            "director must have 3 components, got {}",
            d.n_components()
        )));
    }
    let grid = *d.grid();
    let n = grid.n_dims();
    let pts = grid.total_points();
    let grad = d.gradient()?; // component a * n + i
    let gphys = grad.to_physical()?;

    let mut entries = vec![0.0f64; n * n * pts];
    for i in 0..n {
        for j in 0..n {
            let dst = &mut entries[(i * n + j) * pts..(i * n + j + 1) * pts];
            for a in 0..3 {
                let gi = &gphys[(a * n + i) * pts..(a * n + i + 1) * pts];
                let gj = &gphys[(a * n + j) * pts..(a * n + j + 1) * pts];
                for ((dst, x), y) in dst.iter_mut().zip(gi).zip(gj) {
                    *dst += x * y;
                }
            }
        }
    }
    SpectralField::from_physical(grid, n * n, &entries)
}
