//! Flow-map integration along solver snapshots and the regression that
//! measures how trajectory separation depends on initial separation.
//!
//! Positions are kept in the universal cover (never wrapped), while field
//! evaluation is trigonometric and therefore periodic automatically. By
//! default the flow is driven by the velocity alone; an optional
//! exploratory mode adds a configured linear contraction of the director
//! gradient as extra drift and is labeled nonstandard.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::field::SpectralField;
use crate::grid::Grid;

/// Evaluate a field at an arbitrary (off-grid) position by summing its
/// Fourier series exactly; agrees with stored values at grid points.
pub fn interpolate_field(f: &SpectralField, x: [f64; 3]) -> Vec<f64> {
    let grid = *f.grid();
    let npd = grid.points_per_dim();
    let n = grid.n_dims();
    // Per-axis phase tables e^{i xi_a x_a}.
    let mut phases: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    for a in 0..n {
        phases.push(
            (0..npd)
                .map(|i| Complex64::from_polar(1.0, grid.wavenumber(i) * x[a]))
                .collect(),
        );
    }
    let pts = grid.total_points();
    let mut out = Vec::with_capacity(f.n_components());
    for c in 0..f.n_components() {
        let comp = f.component(c);
        let mut acc = Complex64::default();
        if n == 2 {
            for i0 in 0..npd {
                let mut row = Complex64::default();
                let base = i0 * npd;
                for i1 in 0..npd {
                    row += comp[base + i1] * phases[1][i1];
                }
                acc += row * phases[0][i0];
            }
        } else {
            for flat in 0..pts {
                let idx = grid.unflatten(flat);
                acc += comp[flat] * phases[0][idx[0]] * phases[1][idx[1]] * phases[2][idx[2]];
            }
        }
        out.push(acc.re);
    }
    out
}

/// A velocity field the flow integrator can sample anywhere in space-time.
pub trait VelocityField: Sync {
    fn velocity(&self, x: [f64; 3], t: f64) -> Result<[f64; 3]>;
    /// Closed time interval on which sampling is valid.
    fn time_range(&self) -> (f64, f64);
}

/// Analytic field defined by a closure; used for control cases.
pub struct AnalyticVelocity<F: Fn([f64; 3], f64) -> [f64; 3] + Sync> {
    func: F,
}

impl<F: Fn([f64; 3], f64) -> [f64; 3] + Sync> AnalyticVelocity<F> {
    pub fn new(func: F) -> Self {
        Self { func }
    }
}

impl<F: Fn([f64; 3], f64) -> [f64; 3] + Sync> VelocityField for AnalyticVelocity<F> {
    fn velocity(&self, x: [f64; 3], t: f64) -> Result<[f64; 3]> {
        Ok((self.func)(x, t))
    }
    fn time_range(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }
}

/// Snapshot-backed advecting field: exact spectral evaluation in space,
/// linear interpolation in time between snapshots.
pub struct SnapshotAdvector {
    times: Vec<f64>,
    velocity: Vec<SpectralField>,
    /// Optional drift from the director gradient: component `a * n + i` of
    /// each field is `d_i d^a`; the drift adds `sum_a c_a d_i d^a` to
    /// velocity component i. Exploratory, nonstandard.
    director_gradient: Option<(Vec<SpectralField>, [f64; 3])>,
    grid: Grid,
}

impl SnapshotAdvector {
    pub fn new(times: Vec<f64>, velocity: Vec<SpectralField>) -> Result<Self> {
        if times.is_empty() || times.len() != velocity.len() {
            return Err(CoreError::InvalidConfig(
                "snapshot times and fields must be nonempty and equal length".into(),
            ));
        }
        for w in times.windows(2) {
            if w[1] <= w[0] {
                return Err(CoreError::InvalidConfig(
                    "snapshot times must be strictly increasing".into(),
                ));
            }
        }
        let grid = *velocity[0].grid();
        Ok(Self {
            times,
            velocity,
            director_gradient: None,
            grid,
        })
    }

    /// Enable the exploratory coupled drift with contraction coefficients.
    pub fn with_director_drift(
        mut self,
        gradients: Vec<SpectralField>,
        coefficients: [f64; 3],
    ) -> Result<Self> {
        if gradients.len() != self.times.len() {
            return Err(CoreError::InvalidConfig(
                "gradient snapshots must match times".into(),
            ));
        }
        self.director_gradient = Some((gradients, coefficients));
        Ok(self)
    }

    fn bracket(&self, t: f64) -> Result<(usize, usize, f64)> {
        let t0 = *self.times.first().unwrap();
        let t1 = *self.times.last().unwrap();
        if t < t0 - 1e-12 || t > t1 + 1e-12 {
            return Err(CoreError::InvalidConfig(format!(
                "time {t} outside snapshot range [{t0}, {t1}]"
            )));
        }
        let t = t.clamp(t0, t1);
        let hi = match self
            .times
            .binary_search_by(|v| v.partial_cmp(&t).expect("finite times"))
        {
            Ok(i) => i,
            Err(i) => i.min(self.times.len() - 1),
        };
        if hi == 0 {
            return Ok((0, 0, 0.0));
        }
        let lo = hi - 1;
        let theta = (t - self.times[lo]) / (self.times[hi] - self.times[lo]);
        Ok((lo, hi, theta))
    }
}

impl VelocityField for SnapshotAdvector {
    fn velocity(&self, x: [f64; 3], t: f64) -> Result<[f64; 3]> {
        let (lo, hi, theta) = self.bracket(t)?;
        let n = self.grid.n_dims();
        let a = interpolate_field(&self.velocity[lo], x);
        let b = interpolate_field(&self.velocity[hi], x);
        let mut v = [0.0; 3];
        for i in 0..n {
            v[i] = a[i] + theta * (b[i] - a[i]);
        }
        if let Some((grads, coeff)) = &self.director_gradient {
            let ga = interpolate_field(&grads[lo], x);
            let gb = interpolate_field(&grads[hi], x);
            for i in 0..n {
                for a_idx in 0..3 {
                    let g = ga[a_idx * n + i] + theta * (gb[a_idx * n + i] - ga[a_idx * n + i]);
                    v[i] += coeff[a_idx] * g;
                }
            }
        }
        Ok(v)
    }

    fn time_range(&self) -> (f64, f64) {
        (*self.times.first().unwrap(), *self.times.last().unwrap())
    }
}

/// Seed points, their integrated paths (unwrapped), and the index pairs
/// tracked for separation regression.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectorySet {
    pub seeds: Vec<[f64; 3]>,
    pub times: Vec<f64>,
    /// paths[seed][time_index]
    pub paths: Vec<Vec<[f64; 3]>>,
    pub pairs: Vec<(usize, usize)>,
}

impl TrajectorySet {
    /// Index of the stored time closest to `t`.
    pub fn nearest_time_index(&self, t: f64) -> usize {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for (i, &ti) in self.times.iter().enumerate() {
            let d = (ti - t).abs();
            if d < dist {
                dist = d;
                best = i;
            }
        }
        best
    }
}

/// Classical 4th-order one-step integration of `d gamma / dt = v(gamma, t)`
/// for every seed, recording positions at every step. Temporal accuracy is
/// limited to order 2 overall when `v` interpolates snapshots linearly in
/// time.
pub fn integrate_flow(
    field: &impl VelocityField,
    seeds: &[[f64; 3]],
    pairs: Vec<(usize, usize)>,
    t_end: f64,
    dt: f64,
) -> Result<TrajectorySet> {
    if seeds.is_empty() {
        return Err(CoreError::EmptyInput("seed list"));
    }
    if !(dt > 0.0) || !(t_end > 0.0) {
        return Err(CoreError::InvalidConfig("dt and t_end must be positive".into()));
    }
    let (t_start, t_max) = field.time_range();
    if t_end > t_max + 1e-12 {
        return Err(CoreError::InvalidConfig(format!(
            "t_end {t_end} beyond field coverage {t_max}"
        )));
    }
    for (a, b) in &pairs {
        if *a >= seeds.len() || *b >= seeds.len() {
            return Err(CoreError::InvalidConfig("pair index out of range".into()));
        }
    }

    let n_steps = ((t_end - t_start) / dt).ceil() as usize;
    let times: Vec<f64> = (0..=n_steps)
        .map(|i| (t_start + i as f64 * dt).min(t_end))
        .collect();

    let paths: Vec<Vec<[f64; 3]>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut path = Vec::with_capacity(times.len());
            let mut x = seed;
            path.push(x);
            for w in times.windows(2) {
                let (t, t_next) = (w[0], w[1]);
                let h = t_next - t;
                if h <= 0.0 {
                    path.push(x);
                    continue;
                }
                let k1 = field.velocity(x, t)?;
                let k2 = field.velocity(offset(x, k1, h / 2.0), t + h / 2.0)?;
                let k3 = field.velocity(offset(x, k2, h / 2.0), t + h / 2.0)?;
                let k4 = field.velocity(offset(x, k3, h), t_next)?;
                for i in 0..3 {
                    x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                path.push(x);
            }
            Ok(path)
        })
        .collect::<Result<_>>()?;

    Ok(TrajectorySet {
        seeds: seeds.to_vec(),
        times,
        paths,
        pairs,
    })
}

#[inline]
fn offset(x: [f64; 3], v: [f64; 3], s: f64) -> [f64; 3] {
    [x[0] + v[0] * s, x[1] + v[1] * s, x[2] + v[2] * s]
}

fn euclid(a: [f64; 3], b: [f64; 3]) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        let d = a[i] - b[i];
        s += d * d;
    }
    s.sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct HolderFit {
    /// Fitted slope of log separation-at-t against log initial separation.
    pub alpha: f64,
    /// Fitted prefactor (exp of the regression intercept).
    pub prefactor: f64,
    pub residual: f64,
    /// Pairs excluded because their separation grew past a quarter period
    /// (wrap-ambiguous on the torus).
    pub excluded: usize,
    pub pairs_used: usize,
}

/// Regression of log pair separation at time `t` against log initial
/// separation. Initial separations must span at least four dyadic scales
/// and stay at most one.
pub fn holder_exponent(traj: &TrajectorySet, t: f64) -> Result<HolderFit> {
    holder_exponent_with_period(traj, t, f64::INFINITY)
}

/// Same as `holder_exponent` but excluding pairs whose separation exceeds a
/// quarter of the given period.
pub fn holder_exponent_with_period(traj: &TrajectorySet, t: f64, period: f64) -> Result<HolderFit> {
    if traj.pairs.is_empty() {
        return Err(CoreError::EmptyInput("pair list"));
    }
    let ti = traj.nearest_time_index(t);
    let mut rho0 = Vec::new();
    let mut rhot = Vec::new();
    let mut excluded = 0usize;
    for &(a, b) in &traj.pairs {
        let r0 = euclid(traj.seeds[a], traj.seeds[b]);
        let rt = euclid(traj.paths[a][ti], traj.paths[b][ti]);
        if r0 <= 0.0 || r0 > 1.0 {
            return Err(CoreError::InvalidConfig(format!(
                "initial separation {r0} violates 0 < |x1 - x2| <= 1"
            )));
        }
        if rt > period / 4.0 {
            excluded += 1;
            continue;
        }
        if rt <= 0.0 {
            excluded += 1;
            continue;
        }
        rho0.push(r0);
        rhot.push(rt);
    }
    if rho0.len() < 2 {
        return Err(CoreError::FitRejected("fewer than 2 usable pairs".into()));
    }
    let min_r0 = rho0.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_r0 = rho0.iter().cloned().fold(0.0f64, f64::max);
    // Require >= 4 dyadic scales of spread.
    if max_r0 / min_r0 < 2f64.powi(4) * (1.0 - 1e-9) {
        return Err(CoreError::InvalidConfig(
            "initial separations must span at least 4 dyadic scales".into(),
        ));
    }

    let points: Vec<(f64, f64)> = rho0
        .iter()
        .zip(&rhot)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|(x, _)| x).sum();
    let sy: f64 = points.iter().map(|(_, y)| y).sum();
    let sxx: f64 = points.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = points.iter().map(|(x, y)| x * y).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return Err(CoreError::FitRejected("degenerate separations".into()));
    }
    let alpha = (n * sxy - sx * sy) / denom;
    let intercept = (sy - alpha * sx) / n;
    let rss: f64 = points
        .iter()
        .map(|(x, y)| {
            let e = y - (alpha * x + intercept);
            e * e
        })
        .sum();
    Ok(HolderFit {
        alpha,
        prefactor: intercept.exp(),
        residual: (rss / n).sqrt(),
        excluded,
        pairs_used: rho0.len(),
    })
}

/// Deterministic seed pairs: `n_base` anchor points with partners displaced
/// by each scale along rotating directions. Scales default to the dyadic
/// range 2^-8 .. 2^-4.
pub fn dyadic_pair_seeds(
    grid: &Grid,
    n_base: usize,
    scales: &[f64],
    seed: u64,
) -> (Vec<[f64; 3]>, Vec<(usize, usize)>) {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = grid.period();
    let mut seeds = Vec::new();
    let mut pairs = Vec::new();
    for _ in 0..n_base {
        let anchor = [rng.random::<f64>() * l, rng.random::<f64>() * l, 0.0];
        let ai = seeds.len();
        seeds.push(anchor);
        for &s in scales {
            let angle = rng.random::<f64>() * std::f64::consts::TAU;
            let partner = [
                anchor[0] + s * angle.cos(),
                anchor[1] + s * angle.sin(),
                0.0,
            ];
            let pi = seeds.len();
            seeds.push(partner);
            pairs.push((ai, pi));
        }
    }
    (seeds, pairs)
}

/// The default dyadic separation scales 2^-8 .. 2^-4.
pub fn default_separation_scales() -> Vec<f64> {
    (4..=8).rev().map(|e| 2f64.powi(-e)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::cosine_mode_field;

    fn grid() -> Grid {
        Grid::new(2, 32, Grid::DEFAULT_PERIOD).unwrap()
    }

    #[test]
    fn interpolation_matches_grid_values_and_closed_form() {
        let g = grid();
        let f = cosine_mode_field(g, [1, 0, 0], 1.0);
        // Grid point.
        let flat = g.flatten([5, 9, 0]);
        let x = g.position(flat);
        let v = interpolate_field(&f, x);
        let phys = f.to_physical().unwrap();
        assert!((v[0] - phys[flat]).abs() < 1e-12);
        // Off-grid closed form at x0 = L/4: cos(pi/2) = 0 plus exactness
        // at a generic point.
        let l = g.period();
        let v = interpolate_field(&f, [l / 4.0, 0.3, 0.0]);
        assert!(v[0].abs() < 1e-12);
        let xq = [0.123 * l, 0.77 * l, 0.0];
        let v = interpolate_field(&f, xq);
        let expected = (2.0 * std::f64::consts::PI * xq[0] / l).cos();
        assert!((v[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_field_keeps_seeds_fixed() {
        let v = AnalyticVelocity::new(|_, _| [0.0, 0.0, 0.0]);
        let seeds = vec![[1.0, 2.0, 0.0], [3.0, 4.0, 0.0]];
        let traj = integrate_flow(&v, &seeds, vec![(0, 1)], 2.0, 0.1).unwrap();
        for (s, p) in seeds.iter().zip(&traj.paths) {
            for x in p {
                assert_eq!(x, s);
            }
        }
    }

    #[test]
    fn uniform_translation_is_exact() {
        let c = [0.3, -0.7, 0.0];
        let v = AnalyticVelocity::new(move |_, _| c);
        let seeds = vec![[0.0, 0.0, 0.0]];
        let traj = integrate_flow(&v, &seeds, vec![], 1.5, 0.05).unwrap();
        let end = traj.paths[0].last().unwrap();
        assert!((end[0] - 0.45).abs() < 1e-12);
        assert!((end[1] + 1.05).abs() < 1e-12);
    }

    #[test]
    fn rigid_rotation_orbits() {
        let g = grid();
        let l = g.period();
        let center = [l / 2.0, l / 2.0, 0.0];
        let omega = 0.8;
        let v = AnalyticVelocity::new(move |x, _| {
            [-omega * (x[1] - center[1]), omega * (x[0] - center[0]), 0.0]
        });
        let radius = 3.0;
        let seeds = vec![[center[0] + radius, center[1], 0.0]];
        let period = std::f64::consts::TAU / omega;
        let traj = integrate_flow(&v, &seeds, vec![], period, period / 4096.0).unwrap();
        let end = traj.paths[0].last().unwrap();
        assert!(euclid(*end, seeds[0]) < 1e-6, "orbit closes after one period");
        // Radius preserved along the way.
        for x in &traj.paths[0] {
            assert!((euclid(*x, center) - radius).abs() < 1e-6);
        }
    }

    #[test]
    fn flow_map_group_property_on_frozen_field() {
        let g = grid();
        let u = cosine_mode_field(g, [1, 2, 0], 0.5);
        let mut vel = SpectralField::zeros(g, 2);
        vel.component_mut(0).copy_from_slice(u.component(0));
        let adv = SnapshotAdvector::new(vec![0.0, 10.0], vec![vel.clone(), vel]).unwrap();

        let seeds = vec![[1.0, 1.0, 0.0]];
        let dt = 0.05;
        let direct = integrate_flow(&adv, &seeds, vec![], 4.0, dt).unwrap();

        let half = integrate_flow(&adv, &seeds, vec![], 2.0, dt).unwrap();
        let mid = *half.paths[0].last().unwrap();
        // Frozen field: restarting is integrating the same field again.
        let second = integrate_flow(&adv, &[mid], vec![], 2.0, dt).unwrap();
        let end_restart = *second.paths[0].last().unwrap();
        let end_direct = *direct.paths[0].last().unwrap();
        assert!(
            euclid(end_restart, end_direct) < 1e-8,
            "restart error {}",
            euclid(end_restart, end_direct)
        );
    }

    #[test]
    fn incompressible_frozen_field_preserves_area() {
        let g = grid();
        // Divergence-free: u = (d psi / d x1, -d psi / d x0).
        let psi = cosine_mode_field(g, [1, 1, 0], 1.0);
        let mut vel = SpectralField::zeros(g, 2);
        vel.component_mut(0)
            .copy_from_slice(psi.derivative(1, 1).unwrap().component(0));
        let d1 = psi.derivative(0, 1).unwrap().scaled(-1.0);
        vel.component_mut(1).copy_from_slice(d1.component(0));
        let adv = SnapshotAdvector::new(vec![0.0, 100.0], vec![vel.clone(), vel]).unwrap();

        let h = 0.01;
        let base = [10.0, 12.0, 0.0];
        let seeds = vec![
            base,
            [base[0] + h, base[1], 0.0],
            [base[0] + h, base[1] + h, 0.0],
            [base[0], base[1] + h, 0.0],
        ];
        let traj = integrate_flow(&adv, &seeds, vec![], 100.0 * 0.05, 0.05).unwrap();
        let last: Vec<[f64; 3]> = traj.paths.iter().map(|p| *p.last().unwrap()).collect();
        // Shoelace area of the advected quadrilateral vs h^2.
        let mut area = 0.0;
        for i in 0..4 {
            let a = last[i];
            let b = last[(i + 1) % 4];
            area += a[0] * b[1] - b[0] * a[1];
        }
        area = area.abs() / 2.0;
        assert!(
            (area / (h * h) - 1.0).abs() < 1e-3,
            "area ratio {}",
            area / (h * h)
        );
    }

    #[test]
    fn holder_exponent_identity_and_rotation() {
        let g = grid();
        let scales = default_separation_scales();
        let (seeds, pairs) = dyadic_pair_seeds(&g, 6, &scales, 9);

        let still = AnalyticVelocity::new(|_, _| [0.0, 0.0, 0.0]);
        let traj = integrate_flow(&still, &seeds, pairs.clone(), 1.0, 0.1).unwrap();
        let fit = holder_exponent(&traj, 1.0).unwrap();
        assert!((fit.alpha - 1.0).abs() < 1e-3);
        assert!((fit.prefactor - 1.0).abs() < 1e-3);

        let l = g.period();
        let center = [l / 2.0, l / 2.0, 0.0];
        let rot = AnalyticVelocity::new(move |x, _| {
            [-0.5 * (x[1] - center[1]), 0.5 * (x[0] - center[0]), 0.0]
        });
        let traj = integrate_flow(&rot, &seeds, pairs, 1.0, 0.005).unwrap();
        let fit = holder_exponent(&traj, 1.0).unwrap();
        assert!((fit.alpha - 1.0).abs() < 1e-3, "isometry: alpha {}", fit.alpha);
    }

    #[test]
    fn holder_rejects_narrow_scale_range() {
        let g = grid();
        let (seeds, pairs) = dyadic_pair_seeds(&g, 4, &[2f64.powi(-5), 2f64.powi(-6)], 3);
        let still = AnalyticVelocity::new(|_, _| [0.0, 0.0, 0.0]);
        let traj = integrate_flow(&still, &seeds, pairs, 1.0, 0.25).unwrap();
        assert!(holder_exponent(&traj, 1.0).is_err());
    }

    #[test]
    fn snapshot_advector_time_interpolation() {
        let g = grid();
        let f0 = cosine_mode_field(g, [1, 0, 0], 1.0);
        let f1 = cosine_mode_field(g, [1, 0, 0], 3.0);
        let mut u0 = SpectralField::zeros(g, 2);
        u0.component_mut(0).copy_from_slice(f0.component(0));
        let mut u1 = SpectralField::zeros(g, 2);
        u1.component_mut(0).copy_from_slice(f1.component(0));
        let adv = SnapshotAdvector::new(vec![0.0, 1.0], vec![u0, u1]).unwrap();
        let v = adv.velocity([0.0, 0.0, 0.0], 0.25).unwrap();
        // cos(0) = 1: amplitude interpolates 1 -> 3, so 1.5 at t = 0.25.
        assert!((v[0] - 1.5).abs() < 1e-12);
        assert!(adv.velocity([0.0, 0.0, 0.0], 2.0).is_err());
    }
}
