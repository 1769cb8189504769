//! Carleson-measure-style norms via heat extension: the BMO seminorm, its
//! divergence counterpart, and the mixed sup/Carleson norms used as the
//! solution spaces for velocity and director.
//!
//! Continuous suprema over centers, radii and heat times are discretized by
//! strided lattice centers, dyadic radii capped at L/2 (balls must embed in
//! the fundamental domain) and log-spaced time nodes. The discretization
//! under-approximates; refining the configuration never decreases a norm.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::field::{pointwise_magnitude, SpectralField};
use crate::grid::Grid;
use crate::heat::heat_semigroup;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CarlesonConfig {
    /// Dyadic radii, each at most L/2.
    pub radii: Vec<f64>,
    /// Stride of the center sub-lattice.
    pub center_stride: usize,
    /// Number of log-spaced heat-time nodes per cylinder.
    pub time_samples: usize,
}

impl CarlesonConfig {
    /// Dyadic radii from L/2 down to twice the grid spacing, centers every
    /// eighth point, 24 time nodes.
    pub fn default_for(grid: &Grid) -> Result<Self> {
        let mut radii = Vec::new();
        let mut r = grid.period() / 2.0;
        let r_min = 2.0 * grid.spacing();
        while r >= r_min {
            radii.push(r);
            r /= 2.0;
        }
        let cfg = Self {
            radii,
            center_stride: (grid.points_per_dim() / 8).max(1),
            time_samples: 24,
        };
        cfg.validate(grid)?;
        Ok(cfg)
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if self.radii.is_empty() {
            return Err(CoreError::InvalidConfig("radii list is empty".into()));
        }
        let r_min = 2.0 * grid.spacing();
        for &r in &self.radii {
            if r > grid.period() / 2.0 + 1e-12 {
                return Err(CoreError::InvalidConfig(format!(
                    "radius {r} exceeds half the period"
                )));
            }
            if r < r_min - 1e-12 {
                return Err(CoreError::InvalidConfig(format!(
                    "radius {r} is below twice the grid spacing"
                )));
            }
        }
        if self.center_stride == 0 || self.center_stride > grid.points_per_dim() {
            return Err(CoreError::InvalidConfig("bad center stride".into()));
        }
        if self.time_samples < 4 {
            return Err(CoreError::InvalidConfig(
                "need at least 4 time samples per cylinder".into(),
            ));
        }
        Ok(())
    }
}

/// Flat indices of cells whose centers lie within distance r of a given
/// center, in the minimum-image metric.
fn ball_member_offsets(grid: &Grid, r: f64) -> Vec<[i64; 3]> {
    let n = grid.n_dims();
    let h = grid.spacing();
    let reach = (r / h).ceil() as i64;
    let npd = grid.points_per_dim() as i64;
    let cap = reach.min(npd / 2);
    let mut out = Vec::new();
    let range = -cap..=cap;
    if n == 2 {
        for d0 in range.clone() {
            for d1 in range.clone() {
                let dx0 = grid.min_image(d0 as f64 * h);
                let dx1 = grid.min_image(d1 as f64 * h);
                if dx0 * dx0 + dx1 * dx1 < r * r {
                    out.push([d0, d1, 0]);
                }
            }
        }
    } else {
        for d0 in range.clone() {
            for d1 in range.clone() {
                for d2 in range.clone() {
                    let dx0 = grid.min_image(d0 as f64 * h);
                    let dx1 = grid.min_image(d1 as f64 * h);
                    let dx2 = grid.min_image(d2 as f64 * h);
                    if dx0 * dx0 + dx1 * dx1 + dx2 * dx2 < r * r {
                        out.push([d0, d1, d2]);
                    }
                }
            }
        }
    }
    out
}

fn center_indices(grid: &Grid, stride: usize) -> Vec<[usize; 3]> {
    let npd = grid.points_per_dim();
    let mut centers = Vec::new();
    if grid.n_dims() == 2 {
        for c0 in (0..npd).step_by(stride) {
            for c1 in (0..npd).step_by(stride) {
                centers.push([c0, c1, 0]);
            }
        }
    } else {
        for c0 in (0..npd).step_by(stride) {
            for c1 in (0..npd).step_by(stride) {
                for c2 in (0..npd).step_by(stride) {
                    centers.push([c0, c1, c2]);
                }
            }
        }
    }
    centers
}

/// Max over centers of the ball sum of `integrand`, normalized by r^{-n} and
/// the cell volume.
fn sup_ball_average(grid: &Grid, integrand: &[f64], r: f64, stride: usize) -> f64 {
    let offsets = ball_member_offsets(grid, r);
    let centers = center_indices(grid, stride);
    let npd = grid.points_per_dim() as i64;
    let norm = grid.cell_volume() / r.powi(grid.n_dims() as i32);
    let n = grid.n_dims();
    centers
        .par_iter()
        .map(|c| {
            let mut acc = 0.0f64;
            for off in &offsets {
                let mut idx = [0usize; 3];
                for a in 0..n {
                    let v = (c[a] as i64 + off[a]).rem_euclid(npd);
                    idx[a] = v as usize;
                }
                acc += integrand[grid.flatten(idx)];
            }
            acc * norm
        })
        .reduce(|| 0.0, f64::max)
}

/// Log-spaced heat-time nodes for one cylinder of height r^2, starting at 0.
fn heat_time_nodes(r: f64, n_samples: usize) -> Vec<f64> {
    let t_top = r * r;
    let mut nodes = Vec::with_capacity(n_samples + 1);
    nodes.push(0.0);
    // Geometric from t_top * 2^-20 up to t_top.
    let t_min = t_top * 2f64.powi(-20);
    let ratio = (t_top / t_min).powf(1.0 / (n_samples as f64 - 1.0));
    let mut t = t_min;
    for _ in 0..n_samples {
        nodes.push(t.min(t_top));
        t *= ratio;
    }
    nodes
}

/// Squared pointwise magnitude of a field (or of its gradient) in physical
/// space.
fn squared_magnitude(f: &SpectralField, gradient: bool) -> Result<Vec<f64>> {
    let g = if gradient { f.gradient()? } else { f.clone() };
    let phys = g.to_physical()?;
    let mag = pointwise_magnitude(&phys, g.n_components());
    Ok(mag.iter().map(|v| v * v).collect())
}

/// Carleson part of a heat-extension norm for one scalar or vector field:
/// `sup_{x, r} ( r^{-n} int_0^{r^2} int_{|y - x| < r} q(y, t) dy dt )^{1/2}`
/// with `q = |W|^2` or `|grad W|^2` for the heat extension W of f.
fn heat_extension_carleson(f: &SpectralField, cfg: &CarlesonConfig, gradient: bool) -> Result<f64> {
    let grid = *f.grid();
    let mut sup = 0.0f64;
    for &r in &cfg.radii {
        let nodes = heat_time_nodes(r, cfg.time_samples);
        // Time-trapezoid accumulated pointwise.
        let mut integrated = vec![0.0f64; grid.total_points()];
        let mut prev: Option<(f64, Vec<f64>)> = None;
        for &t in &nodes {
            let q = squared_magnitude(&heat_semigroup(f, t)?, gradient)?;
            if let Some((t0, q0)) = prev {
                let w = 0.5 * (t - t0);
                for ((acc, a), b) in integrated.iter_mut().zip(&q0).zip(&q) {
                    *acc += w * (a + b);
                }
            }
            prev = Some((t, q));
        }
        sup = sup.max(sup_ball_average(&grid, &integrated, r, cfg.center_stride));
    }
    Ok(sup.sqrt())
}

/// BMO seminorm via the heat extension: Carleson bound on `|grad W|^2`.
/// Vector input takes the max over components.
pub fn bmo_seminorm(f: &SpectralField, cfg: &CarlesonConfig) -> Result<f64> {
    cfg.validate(f.grid())?;
    let mut worst = 0.0f64;
    for c in 0..f.n_components() {
        let scalar = extract_component(f, c);
        worst = worst.max(heat_extension_carleson(&scalar, cfg, true)?);
    }
    Ok(worst)
}

/// Divergence-regularity norm via the heat extension: Carleson bound on
/// `|W|^2` itself. Vector input takes the max over components.
pub fn bmo_minus1_norm(f: &SpectralField, cfg: &CarlesonConfig) -> Result<f64> {
    cfg.validate(f.grid())?;
    let mut worst = 0.0f64;
    for c in 0..f.n_components() {
        let scalar = extract_component(f, c);
        worst = worst.max(heat_extension_carleson(&scalar, cfg, false)?);
    }
    Ok(worst)
}

fn extract_component(f: &SpectralField, c: usize) -> SpectralField {
    let mut out = SpectralField::zeros(*f.grid(), 1);
    out.component_mut(0).copy_from_slice(f.component(c));
    out
}

/// Carleson part over a sampled time series: the cylinder time integral is
/// a trapezoid on the series' own grid, clipped to `[0, min(r^2, t_last)]`
/// with linear interpolation at the clip point.
fn series_carleson(
    series: &[(f64, SpectralField)],
    cfg: &CarlesonConfig,
    gradient: bool,
) -> Result<f64> {
    let grid = *series[0].1.grid();
    let squares: Vec<(f64, Vec<f64>)> = series
        .iter()
        .map(|(t, f)| Ok((*t, squared_magnitude(f, gradient)?)))
        .collect::<Result<_>>()?;

    let mut sup = 0.0f64;
    for &r in &cfg.radii {
        let top = r * r;
        let mut integrated = vec![0.0f64; grid.total_points()];
        for w in squares.windows(2) {
            let (t0, ref q0) = w[0];
            let (t1, ref q1) = w[1];
            if t0 >= top {
                break;
            }
            if t1 <= top {
                let wgt = 0.5 * (t1 - t0);
                for ((acc, a), b) in integrated.iter_mut().zip(q0).zip(q1) {
                    *acc += wgt * (a + b);
                }
            } else {
                // Partial cell: interpolate the squared values at t = top.
                let theta = (top - t0) / (t1 - t0);
                let wgt = 0.5 * (top - t0);
                for ((acc, a), b) in integrated.iter_mut().zip(q0).zip(q1) {
                    let qt = a + theta * (b - a);
                    *acc += wgt * (a + qt);
                }
                break;
            }
        }
        sup = sup.max(sup_ball_average(&grid, &integrated, r, cfg.center_stride));
    }
    Ok(sup.sqrt())
}

fn check_series(series: &[(f64, SpectralField)]) -> Result<()> {
    if series.is_empty() {
        return Err(CoreError::EmptyInput("time series"));
    }
    for w in series.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(CoreError::InvalidConfig(
                "series times must be strictly increasing".into(),
            ));
        }
    }
    if series[0].0 < 0.0 {
        return Err(CoreError::InvalidConfig("series times must be nonnegative".into()));
    }
    Ok(())
}

fn sup_weighted_sup_norm(series: &[(f64, SpectralField)], gradient: bool) -> Result<f64> {
    let mut sup = 0.0f64;
    for (t, f) in series {
        let g = if gradient { f.gradient()? } else { f.clone() };
        sup = sup.max(t.sqrt() * g.max_abs_physical()?);
    }
    Ok(sup)
}

/// Velocity-space norm: `sup_t sqrt(t) ||g||_inf` plus the Carleson part of
/// `|g|^2` over the sampled series.
pub fn z_norm(series: &[(f64, SpectralField)], cfg: &CarlesonConfig) -> Result<f64> {
    check_series(series)?;
    cfg.validate(series[0].1.grid())?;
    Ok(sup_weighted_sup_norm(series, false)? + series_carleson(series, cfg, false)?)
}

/// Director-space norm: `sup_t sqrt(t) ||grad f||_inf` plus the Carleson
/// part of `|grad f|^2`.
pub fn x_norm(series: &[(f64, SpectralField)], cfg: &CarlesonConfig) -> Result<f64> {
    check_series(series)?;
    cfg.validate(series[0].1.grid())?;
    Ok(sup_weighted_sup_norm(series, true)? + series_carleson(series, cfg, true)?)
}

/// Full director norm: `x_norm` plus `sup_t ||f||_inf`.
pub fn x_norm_full(series: &[(f64, SpectralField)], cfg: &CarlesonConfig) -> Result<f64> {
    let x = x_norm(series, cfg)?;
    let mut sup = 0.0f64;
    for (_, f) in series {
        sup = sup.max(f.max_abs_physical()?);
    }
    Ok(x + sup)
}
