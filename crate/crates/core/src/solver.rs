//! Evolution of the coupled velocity / director system in its mild
//! (integral) formulation.
//!
//! The linear heat part is applied exactly through an integrating factor;
//! only the nonlinearity is advanced by the Runge-Kutta stages. Pressure is
//! eliminated by applying the divergence-free projection to the momentum
//! nonlinearity. Quadratic and cubic products are formed pointwise in
//! physical space under the 2/3-rule mask.

use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::field::SpectralField;
use crate::grid::Grid;
use crate::lp::{besov_norm, BesovIndex, DyadicPartition};
use crate::spaces::{bmo_minus1_norm, bmo_seminorm, CarlesonConfig};

/// Divergence residual allowed in spectral coefficients, relative to the
/// largest coefficient.
pub const DIV_FREE_TOL: f64 = 1e-10;

/// Allowed pointwise deviation of `|d|^2` from one when renormalization is
/// active.
pub const SPHERE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    IfRk4,
    IfEuler,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt_max: f64,
    pub cfl_safety: f64,
    pub renormalize_director: bool,
    pub dealias: bool,
    pub scheme: Scheme,
    /// Target smallness of the measured initial-data norms.
    pub epsilon_target: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt_max: 0.25,
            cfl_safety: 0.5,
            renormalize_director: true,
            dealias: true,
            scheme: Scheme::IfRk4,
            epsilon_target: 0.02,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(CoreError::InvalidConfig(format!(
                "cfl_safety must lie in (0, 1], got {}",
                self.cfl_safety
            )));
        }
        if !(self.dt_max > 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "dt_max must be positive, got {}",
                self.dt_max
            )));
        }
        if !(self.epsilon_target > 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "epsilon_target must be positive, got {}",
                self.epsilon_target
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Diagnostics {
    pub max_divergence: f64,
    pub max_sphere_violation: f64,
    pub dt_used: f64,
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub t: f64,
    pub u: SpectralField,
    pub d: SpectralField,
    pub step_count: u64,
    pub diagnostics: Diagnostics,
}

impl SolverState {
    /// Wrap validated initial data at t = 0.
    pub fn new(u: SpectralField, d: SpectralField) -> Result<Self> {
        let grid = *u.grid();
        if u.n_components() != grid.n_dims() {
            return Err(CoreError::InvalidField(format!(
                "velocity needs {} components, got {}",
                grid.n_dims(),
                u.n_components()
            )));
        }
        if d.n_components() != 3 {
            return Err(CoreError::InvalidField(format!(
                "director needs 3 components, got {}",
                d.n_components()
            )));
        }
        if *d.grid() != grid {
            return Err(CoreError::InvalidField("grids differ".into()));
        }
        let div = divergence_residual(&u);
        let scale = u.max_abs_coeff().max(1e-300);
        if div > DIV_FREE_TOL * scale {
            return Err(CoreError::InvalidField(format!(
                "initial velocity is not divergence-free: residual {div:e}"
            )));
        }
        let sphere = sphere_violation(&d)?;
        if sphere > SPHERE_TOL {
            return Err(CoreError::InvalidField(format!(
                "initial director leaves the unit sphere by {sphere:e}"
            )));
        }
        Ok(Self {
            t: 0.0,
            u,
            d,
            step_count: 0,
            diagnostics: Diagnostics {
                max_divergence: div,
                max_sphere_violation: sphere,
                dt_used: 0.0,
            },
        })
    }
}

/// Largest coefficient of `xi . u_hat(xi)` over the lattice.
pub fn divergence_residual(u: &SpectralField) -> f64 {
    let grid = *u.grid();
    let n = grid.n_dims();
    let mut worst = 0.0f64;
    for flat in 0..grid.total_points() {
        let xi = grid.wavevector(flat);
        let mut z = Complex64::default();
        for i in 0..n {
            z += u.component(i)[flat] * xi[i];
        }
        worst = worst.max(z.norm());
    }
    worst
}

/// Largest pointwise deviation of `|d|^2` from one.
pub fn sphere_violation(d: &SpectralField) -> Result<f64> {
    let pts = d.grid().total_points();
    let phys = d.to_physical()?;
    let mut worst = 0.0f64;
    for p in 0..pts {
        let mut s = 0.0;
        for c in 0..3 {
            let v = phys[c * pts + p];
            s += v * v;
        }
        worst = worst.max((s - 1.0).abs());
    }
    Ok(worst)
}

/// Divergence-free projection: frequency-wise `delta_jk - xi_j xi_k / |xi|^2`
/// applied to a vector field; the zero mode passes through unchanged.
pub fn leray_project(f: &SpectralField) -> Result<SpectralField> {
    let grid = *f.grid();
    let n = grid.n_dims();
    if f.n_components() != n {
        return Err(CoreError::InvalidField(format!(
            "projection expects {} components, got {}",
            n,
            f.n_components()
        )));
    }
    let pts = grid.total_points();
    let mut out = f.clone();
    for flat in 1..pts {
        let xi = grid.wavevector(flat);
        let r2 = grid.xi_norm2(flat);
        if r2 == 0.0 {
            continue;
        }
        let mut dot = Complex64::default();
        for i in 0..n {
            dot += out.component(i)[flat] * xi[i];
        }
        let dot = dot / r2;
        for i in 0..n {
            out.component_mut(i)[flat] -= dot * xi[i];
        }
    }
    Ok(out)
}

fn maybe_dealias(f: &SpectralField, dealias: bool) -> SpectralField {
    if dealias {
        f.dealiased()
    } else {
        f.clone()
    }
}

/// Momentum nonlinearity `-P div(u (x) u + grad d (.) grad d)`; the heat
/// factor is applied by the stepper, not here. Output is divergence-free.
pub fn momentum_rhs(u: &SpectralField, d: &SpectralField, dealias: bool) -> Result<SpectralField> {
    let grid = *u.grid();
    let n = grid.n_dims();
    let pts = grid.total_points();

    let u_in = maybe_dealias(u, dealias);
    let gd = maybe_dealias(d, dealias).gradient()?; // component a * n + i
    let u_phys = u_in.to_physical()?;
    let gd_phys = gd.to_physical()?;

    // T_ij = u_i u_j + sum_a (d_i d^a)(d_j d^a)
    let mut tensor = vec![0.0f64; n * n * pts];
    for i in 0..n {
        for j in 0..n {
            let dst = &mut tensor[(i * n + j) * pts..(i * n + j + 1) * pts];
            let ui = &u_phys[i * pts..(i + 1) * pts];
            let uj = &u_phys[j * pts..(j + 1) * pts];
            for ((dst, a), b) in dst.iter_mut().zip(ui).zip(uj) {
                *dst = a * b;
            }
            for a in 0..3 {
                let gi = &gd_phys[(a * n + i) * pts..(a * n + i + 1) * pts];
                let gj = &gd_phys[(a * n + j) * pts..(a * n + j + 1) * pts];
                for ((dst, x), y) in dst.iter_mut().zip(gi).zip(gj) {
                    *dst += x * y;
                }
            }
        }
    }
    let tensor = SpectralField::from_physical(grid, n * n, &tensor)?;
    let tensor = maybe_dealias(&tensor, dealias);
    divergence_of_tensor_projected(&tensor)
}

/// `-P( sum_j d_j T_ij )` assembled spectrally from an n x n tensor field.
fn divergence_of_tensor_projected(tensor: &SpectralField) -> Result<SpectralField> {
    let grid = *tensor.grid();
    let n = grid.n_dims();
    let pts = grid.total_points();
    let mut div = SpectralField::zeros(grid, n);
    for i in 0..n {
        let mut acc = vec![Complex64::default(); pts];
        for j in 0..n {
            let flatc = i * n + j;
            let comp = tensor.component(flatc);
            for flat in 0..pts {
                let xi = grid.wavevector(flat);
                acc[flat] += comp[flat] * Complex64::new(0.0, xi[j]);
            }
        }
        for z in acc.iter_mut() {
            *z = -*z;
        }
        div.component_mut(i).copy_from_slice(&acc);
    }
    leray_project(&div)
}

/// Director nonlinearity `|grad d|^2 d - (u . grad) d`, formed pointwise in
/// physical space.
pub fn director_rhs(u: &SpectralField, d: &SpectralField, dealias: bool) -> Result<SpectralField> {
    let grid = *u.grid();
    let n = grid.n_dims();
    let pts = grid.total_points();

    let u_in = maybe_dealias(u, dealias);
    let d_in = maybe_dealias(d, dealias);
    let gd = d_in.gradient()?;
    let u_phys = u_in.to_physical()?;
    let d_phys = d_in.to_physical()?;
    let gd_phys = gd.to_physical()?;

    let mut grad_sq = vec![0.0f64; pts];
    for c in 0..3 * n {
        let g = &gd_phys[c * pts..(c + 1) * pts];
        for (s, v) in grad_sq.iter_mut().zip(g) {
            *s += v * v;
        }
    }

    let mut out = vec![0.0f64; 3 * pts];
    for a in 0..3 {
        let dst = &mut out[a * pts..(a + 1) * pts];
        let da = &d_phys[a * pts..(a + 1) * pts];
        for ((dst, s), v) in dst.iter_mut().zip(&grad_sq).zip(da) {
            *dst = s * v;
        }
        for i in 0..n {
            let ui = &u_phys[i * pts..(i + 1) * pts];
            let gai = &gd_phys[(a * n + i) * pts..(a * n + i + 1) * pts];
            for ((dst, x), y) in dst.iter_mut().zip(ui).zip(gai) {
                *dst -= x * y;
            }
        }
    }
    let f = SpectralField::from_physical(grid, 3, &out)?;
    Ok(maybe_dealias(&f, dealias))
}

fn decay_table(grid: &Grid, t: f64) -> Vec<f64> {
    (0..grid.total_points())
        .map(|flat| (-grid.xi_norm2(flat) * t).exp())
        .collect()
}

fn apply_table(f: &SpectralField, table: &[f64]) -> SpectralField {
    f.apply_symbol(|flat| table[flat])
}

fn renormalize_director(d: &SpectralField) -> Result<SpectralField> {
    let grid = *d.grid();
    let pts = grid.total_points();
    let mut phys = d.to_physical()?;
    for p in 0..pts {
        let mut s = 0.0;
        for c in 0..3 {
            let v = phys[c * pts + p];
            s += v * v;
        }
        let mag = s.sqrt();
        if mag > 1e-12 {
            for c in 0..3 {
                phys[c * pts + p] /= mag;
            }
        }
    }
    SpectralField::from_physical(grid, 3, &phys)
}

/// Advective CFL time step combined with `dt_max`; the diffusive part needs
/// no restriction because the integrating factor treats it exactly.
pub fn compute_dt(state: &SolverState, cfg: &SolverConfig) -> Result<f64> {
    let h = state.u.grid().spacing();
    let max_u = state.u.max_abs_physical()?;
    let max_gd = state.d.gradient()?.max_abs_physical()?;
    let speed = max_u.max(max_gd).max(1.0);
    Ok(cfg.dt_max.min(cfg.cfl_safety * h / speed))
}

/// One time step of the configured size.
pub fn step(state: &SolverState, cfg: &SolverConfig) -> Result<SolverState> {
    let dt = compute_dt(state, cfg)?;
    advance(state, cfg, dt)
}

/// One time step of an explicitly chosen size.
pub fn advance(state: &SolverState, cfg: &SolverConfig, dt: f64) -> Result<SolverState> {
    cfg.validate()?;
    if !(dt > 0.0) {
        return Err(CoreError::InvalidConfig(format!("dt must be positive, got {dt}")));
    }
    let grid = *state.u.grid();
    let half = decay_table(&grid, dt / 2.0);
    let full = decay_table(&grid, dt);

    let nonlinear = |u: &SpectralField, d: &SpectralField| -> Result<(SpectralField, SpectralField)> {
        Ok((
            momentum_rhs(u, d, cfg.dealias)?,
            director_rhs(u, d, cfg.dealias)?,
        ))
    };

    let (mut u_new, mut d_new) = match cfg.scheme {
        Scheme::IfEuler => {
            let (nu, nd) = nonlinear(&state.u, &state.d)?;
            let mut u = state.u.clone();
            u.add_scaled(&nu, dt);
            let mut d = state.d.clone();
            d.add_scaled(&nd, dt);
            (apply_table(&u, &full), apply_table(&d, &full))
        }
        Scheme::IfRk4 => {
            let (k1u, k1d) = nonlinear(&state.u, &state.d)?;

            let mut ua = state.u.clone();
            ua.add_scaled(&k1u, dt / 2.0);
            let mut da = state.d.clone();
            da.add_scaled(&k1d, dt / 2.0);
            let (k2u, k2d) = nonlinear(&apply_table(&ua, &half), &apply_table(&da, &half))?;

            let mut ub = apply_table(&state.u, &half);
            ub.add_scaled(&k2u, dt / 2.0);
            let mut db = apply_table(&state.d, &half);
            db.add_scaled(&k2d, dt / 2.0);
            let (k3u, k3d) = nonlinear(&ub, &db)?;

            let mut uc = apply_table(&state.u, &full);
            uc.add_scaled(&apply_table(&k3u, &half), dt);
            let mut dc = apply_table(&state.d, &full);
            dc.add_scaled(&apply_table(&k3d, &half), dt);
            let (k4u, k4d) = nonlinear(&uc, &dc)?;

            let assemble = |f0: &SpectralField,
                            k1: &SpectralField,
                            k2: &SpectralField,
                            k3: &SpectralField,
                            k4: &SpectralField| {
                let mut out = apply_table(f0, &full);
                out.add_scaled(&apply_table(k1, &full), dt / 6.0);
                out.add_scaled(&apply_table(&k2.add(k3), &half), dt / 3.0);
                out.add_scaled(k4, dt / 6.0);
                out
            };
            (
                assemble(&state.u, &k1u, &k2u, &k3u, &k4u),
                assemble(&state.d, &k1d, &k2d, &k3d, &k4d),
            )
        }
    };

    if cfg.renormalize_director {
        d_new = renormalize_director(&d_new)?;
    }

    if u_new.check_finite().is_err() || d_new.check_finite().is_err() {
        return Err(CoreError::SolverHalt {
            t: state.t,
            step: state.step_count,
            reason: format!(
                "non-finite field after step (dt = {dt:e}, max_div = {:e}, sphere = {:e})",
                state.diagnostics.max_divergence, state.diagnostics.max_sphere_violation
            ),
        });
    }

    // The nonlinearity is projected and the heat factor is diagonal, so the
    // update cannot create divergence beyond roundoff; measure it anyway.
    let diagnostics = Diagnostics {
        max_divergence: divergence_residual(&u_new),
        max_sphere_violation: sphere_violation(&d_new)?,
        dt_used: dt,
    };
    u_new = leray_project(&u_new)?;

    Ok(SolverState {
        t: state.t + dt,
        u: u_new,
        d: d_new,
        step_count: state.step_count + 1,
        diagnostics,
    })
}

/// March to each requested time exactly (clamping the step when needed) and
/// return the snapshots in order. `times` must be strictly increasing; a
/// leading 0 returns the initial state.
pub fn run_with_snapshots(
    initial: &SolverState,
    cfg: &SolverConfig,
    times: &[f64],
) -> Result<Vec<SolverState>> {
    let mut out = Vec::with_capacity(times.len());
    let mut state = initial.clone();
    for (i, &target) in times.iter().enumerate() {
        if i > 0 && target <= times[i - 1] {
            return Err(CoreError::InvalidConfig(
                "snapshot times must be strictly increasing".into(),
            ));
        }
        if target < state.t - 1e-12 {
            return Err(CoreError::InvalidConfig(
                "snapshot time precedes current state".into(),
            ));
        }
        while state.t < target - 1e-12 {
            let dt = compute_dt(&state, cfg)?.min(target - state.t);
            state = advance(&state, cfg, dt)?;
        }
        out.push(state.clone());
    }
    Ok(out)
}

/// Outcome of the fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PicardStatus {
    Converged,
    MaxIterations,
    Aborted,
}

#[derive(Debug, Clone)]
pub struct PicardReport {
    /// Sup-in-time distance between successive iterates.
    pub distances: Vec<f64>,
    /// Ratios of successive distances.
    pub ratios: Vec<f64>,
    pub status: PicardStatus,
    /// Slice times and the final iterate on them.
    pub times: Vec<f64>,
    pub velocity: Vec<SpectralField>,
    pub director: Vec<SpectralField>,
}

/// Fixed-point iteration of the integral system on stored time slices:
/// iterate `k+1` is the heat flow of the data plus the time-quadrature
/// Duhamel integral of the nonlinearity evaluated on iterate `k`. The
/// zeroth iterate is identically zero, so iterate one is the pure heat
/// flow. Distances are sup over slices of the regularity -1 norm of the
/// velocity increment plus the regularity 0 norm of the director increment.
pub fn picard_solve(
    u0: &SpectralField,
    d0: &SpectralField,
    horizon: f64,
    n_iters: usize,
    n_slices: usize,
    cfg: &SolverConfig,
) -> Result<PicardReport> {
    cfg.validate()?;
    if n_slices < 2 {
        return Err(CoreError::InvalidConfig("need at least 2 slices".into()));
    }
    let grid = *u0.grid();
    let partition = DyadicPartition::build(&grid)?;
    let dt = horizon / n_slices as f64;
    let times: Vec<f64> = (0..=n_slices).map(|i| i as f64 * dt).collect();

    // Heat flow of the data and per-lag decay tables.
    let heat_u: Vec<SpectralField> = times
        .iter()
        .map(|&t| Ok(apply_table(u0, &decay_table(&grid, t))))
        .collect::<Result<_>>()?;
    let heat_d: Vec<SpectralField> = times
        .iter()
        .map(|&t| Ok(apply_table(d0, &decay_table(&grid, t))))
        .collect::<Result<_>>()?;
    let lag_tables: Vec<Vec<f64>> = (0..=n_slices)
        .map(|lag| decay_table(&grid, lag as f64 * dt))
        .collect();

    let mut u_cur: Vec<SpectralField> = times.iter().map(|_| SpectralField::zeros(grid, grid.n_dims())).collect();
    let mut d_cur: Vec<SpectralField> = times.iter().map(|_| SpectralField::zeros(grid, 3)).collect();

    let mut distances = Vec::new();
    let mut status = PicardStatus::MaxIterations;

    for _iter in 0..n_iters {
        // Nonlinearity on the current iterate.
        let rhs: Vec<(SpectralField, SpectralField)> = u_cur
            .iter()
            .zip(&d_cur)
            .map(|(u, d)| Ok((momentum_rhs(u, d, cfg.dealias)?, director_rhs(u, d, cfg.dealias)?)))
            .collect::<Result<_>>()?;

        let mut u_next = Vec::with_capacity(times.len());
        let mut d_next = Vec::with_capacity(times.len());
        for i in 0..=n_slices {
            let mut u = heat_u[i].clone();
            let mut d = heat_d[i].clone();
            for j in 0..=i {
                let w = if i == 0 {
                    0.0
                } else if j == 0 || j == i {
                    dt / 2.0
                } else {
                    dt
                };
                if w == 0.0 {
                    continue;
                }
                let table = &lag_tables[i - j];
                u.add_scaled(&apply_table(&rhs[j].0, table), w);
                d.add_scaled(&apply_table(&rhs[j].1, table), w);
            }
            u_next.push(u);
            d_next.push(d);
        }

        let mut dist = 0.0f64;
        for i in 0..=n_slices {
            let du = besov_norm(
                &u_next[i].sub(&u_cur[i]),
                &partition,
                BesovIndex::MINUS_ONE_INF_INF,
            )?;
            let dd = besov_norm(
                &d_next[i].sub(&d_cur[i]),
                &partition,
                BesovIndex::ZERO_INF_INF,
            )?;
            dist = dist.max(du + dd);
        }
        distances.push(dist);
        u_cur = u_next;
        d_cur = d_next;

        if dist == 0.0 {
            status = PicardStatus::Converged;
            break;
        }
        let k = distances.len();
        if k >= 4
            && distances[k - 1] > distances[k - 2]
            && distances[k - 2] > distances[k - 3]
            && distances[k - 3] > distances[k - 4]
        {
            status = PicardStatus::Aborted;
            break;
        }
    }

    if status == PicardStatus::MaxIterations {
        if let (Some(last), Some(first)) = (distances.last(), distances.first()) {
            if *last < 1e-10 * (*first).max(1e-300) {
                status = PicardStatus::Converged;
            }
        }
    }

    let ratios = distances
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
        .collect();

    Ok(PicardReport {
        distances,
        ratios,
        status,
        times,
        velocity: u_cur,
        director: d_cur,
    })
}

/// Which evolved field a time derivative refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Velocity,
    Director,
}

fn laplacian_pow(f: &SpectralField, k: u32) -> SpectralField {
    let grid = *f.grid();
    f.apply_symbol(|flat| (-grid.xi_norm2(flat)).powi(k as i32))
}

/// Tensor `P_ij = sum_a d_i a^a d_j b^a` from the physical gradients of two
/// 3-component fields.
fn grad_pair_tensor(a: &SpectralField, b: &SpectralField) -> Result<SpectralField> {
    let grid = *a.grid();
    let n = grid.n_dims();
    let pts = grid.total_points();
    let ga = a.dealiased().gradient()?.to_physical()?;
    let gb = b.dealiased().gradient()?.to_physical()?;
    let mut entries = vec![0.0f64; n * n * pts];
    for i in 0..n {
        for j in 0..n {
            let dst = &mut entries[(i * n + j) * pts..(i * n + j + 1) * pts];
            for c in 0..3 {
                let x = &ga[(c * n + i) * pts..(c * n + i + 1) * pts];
                let y = &gb[(c * n + j) * pts..(c * n + j + 1) * pts];
                for ((dst, x), y) in dst.iter_mut().zip(x).zip(y) {
                    *dst += x * y;
                }
            }
        }
    }
    Ok(SpectralField::from_physical(grid, n * n, &entries)?.dealiased())
}

/// Tensor `u_i v_j` from two physical n-component fields.
fn outer_tensor(u: &SpectralField, v: &SpectralField) -> Result<SpectralField> {
    let grid = *u.grid();
    let n = grid.n_dims();
    let pts = grid.total_points();
    let up = u.dealiased().to_physical()?;
    let vp = v.dealiased().to_physical()?;
    let mut entries = vec![0.0f64; n * n * pts];
    for i in 0..n {
        for j in 0..n {
            let dst = &mut entries[(i * n + j) * pts..(i * n + j + 1) * pts];
            let a = &up[i * pts..(i + 1) * pts];
            let b = &vp[j * pts..(j + 1) * pts];
            for ((dst, x), y) in dst.iter_mut().zip(a).zip(b) {
                *dst = x * y;
            }
        }
    }
    Ok(SpectralField::from_physical(grid, n * n, &entries)?.dealiased())
}

/// First time derivatives of both fields from the same slice:
/// `du/dt = Lap u + F_u`, `dd/dt = Lap d + G_d`.
fn first_time_derivatives(state: &SolverState) -> Result<(SpectralField, SpectralField)> {
    let fu = momentum_rhs(&state.u, &state.d, true)?;
    let gd = director_rhs(&state.u, &state.d, true)?;
    let mut udot = laplacian_pow(&state.u, 1);
    udot.add_scaled(&fu, 1.0);
    let mut ddot = laplacian_pow(&state.d, 1);
    ddot.add_scaled(&gd, 1.0);
    Ok((udot, ddot))
}

/// Time derivative of the momentum nonlinearity by the product rule, using
/// the first-order derivatives of both fields.
fn momentum_rhs_time_derivative(
    state: &SolverState,
    udot: &SpectralField,
    ddot: &SpectralField,
) -> Result<SpectralField> {
    let t1 = outer_tensor(udot, &state.u)?;
    let t2 = outer_tensor(&state.u, udot)?;
    let t3 = grad_pair_tensor(ddot, &state.d)?;
    let t4 = grad_pair_tensor(&state.d, ddot)?;
    let sum = t1.add(&t2).add(&t3.add(&t4));
    divergence_of_tensor_projected(&sum)
}

/// Time derivative of the director nonlinearity by the product rule.
fn director_rhs_time_derivative(
    state: &SolverState,
    udot: &SpectralField,
    ddot: &SpectralField,
) -> Result<SpectralField> {
    let grid = *state.u.grid();
    let n = grid.n_dims();
    let pts = grid.total_points();

    let d_phys = state.d.dealiased().to_physical()?;
    let gd = state.d.dealiased().gradient()?.to_physical()?;
    let gddot = ddot.dealiased().gradient()?.to_physical()?;
    let u_phys = state.u.dealiased().to_physical()?;
    let udot_phys = udot.dealiased().to_physical()?;
    let ddot_phys = ddot.dealiased().to_physical()?;

    let mut grad_sq = vec![0.0f64; pts];
    let mut grad_dot = vec![0.0f64; pts]; // sum_{a,i} (d_i ddot^a)(d_i d^a)
    for c in 0..3 * n {
        let g = &gd[c * pts..(c + 1) * pts];
        let gt = &gddot[c * pts..(c + 1) * pts];
        for p in 0..pts {
            grad_sq[p] += g[p] * g[p];
            grad_dot[p] += gt[p] * g[p];
        }
    }

    let mut out = vec![0.0f64; 3 * pts];
    for a in 0..3 {
        let dst = &mut out[a * pts..(a + 1) * pts];
        let da = &d_phys[a * pts..(a + 1) * pts];
        let dadot = &ddot_phys[a * pts..(a + 1) * pts];
        for p in 0..pts {
            dst[p] = 2.0 * grad_dot[p] * da[p] + grad_sq[p] * dadot[p];
        }
        for i in 0..n {
            let ui = &u_phys[i * pts..(i + 1) * pts];
            let uidot = &udot_phys[i * pts..(i + 1) * pts];
            let gai = &gd[(a * n + i) * pts..(a * n + i + 1) * pts];
            let gaidot = &gddot[(a * n + i) * pts..(a * n + i + 1) * pts];
            for p in 0..pts {
                dst[p] -= uidot[p] * gai[p] + ui[p] * gaidot[p];
            }
        }
    }
    Ok(SpectralField::from_physical(grid, 3, &out)?.dealiased())
}

/// Build `d_t^k grad^m` of the requested field from one state slice using
/// the heat-equation recursion: spatial operators and lower-order time
/// derivatives only, no finite differencing in time.
///
/// Supported orders: `k <= 2`.
pub fn time_derivative(
    state: &SolverState,
    kind: FieldKind,
    k: u32,
    m: u32,
) -> Result<SpectralField> {
    if k > 2 {
        return Err(CoreError::Unsupported(format!(
            "time derivatives of order {k} are not supported (max 2)"
        )));
    }
    let base = match kind {
        FieldKind::Velocity => &state.u,
        FieldKind::Director => &state.d,
    };
    let dt_k = match k {
        0 => base.clone(),
        1 => {
            let (udot, ddot) = first_time_derivatives(state)?;
            match kind {
                FieldKind::Velocity => udot,
                FieldKind::Director => ddot,
            }
        }
        _ => {
            let (udot, ddot) = first_time_derivatives(state)?;
            // d_t^2 f = Lap^2 f + Lap F + d_t F.
            match kind {
                FieldKind::Velocity => {
                    let f = momentum_rhs(&state.u, &state.d, true)?;
                    let fdot = momentum_rhs_time_derivative(state, &udot, &ddot)?;
                    let mut out = laplacian_pow(&state.u, 2);
                    out.add_scaled(&laplacian_pow(&f, 1), 1.0);
                    out.add_scaled(&fdot, 1.0);
                    out
                }
                FieldKind::Director => {
                    let g = director_rhs(&state.u, &state.d, true)?;
                    let gdot = director_rhs_time_derivative(state, &udot, &ddot)?;
                    let mut out = laplacian_pow(&state.d, 2);
                    out.add_scaled(&laplacian_pow(&g, 1), 1.0);
                    out.add_scaled(&gdot, 1.0);
                    out
                }
            }
        }
    };
    dt_k.gradient_m(m)
}

/// Spectral shape of generated initial velocity data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SpectrumKind {
    /// Amplitude envelope `|xi|^4 e^{-|xi|^2 / xi0^2}`.
    Peaked,
    /// Envelope `|xi|^{1 - n/2}`: every dyadic shell carries comparable
    /// regularity -1 sup-norm mass, the borderline profile whose heat flow
    /// sweeps scales at a power-law rate.
    CriticalFlat,
    /// A single divergence-free cosine mode.
    SingleMode { k: [i64; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub spectrum: SpectrumKind,
    /// Spectral scale of the peaked envelope and of the director
    /// perturbation's low-pass filter.
    pub xi0: f64,
    /// Raw amplitude of the director perturbation before norm scaling.
    pub director_delta: f64,
}

impl Default for InitialData {
    fn default() -> Self {
        Self {
            spectrum: SpectrumKind::Peaked,
            xi0: 0.7,
            director_delta: 0.4,
        }
    }
}

/// Random divergence-free velocity with the requested spectrum, unscaled.
pub fn random_velocity(grid: &Grid, data: &InitialData, seed: u64) -> Result<SpectralField> {
    let n = grid.n_dims();
    let pts = grid.total_points();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = vec![Complex64::default(); n * pts];

    match &data.spectrum {
        SpectrumKind::SingleMode { k } => {
            let mut f = SpectralField::zeros(*grid, n);
            let npd = grid.points_per_dim() as i64;
            let wrap = |v: i64| (((v % npd) + npd) % npd) as usize;
            let plus = grid.flatten([wrap(k[0]), wrap(k[1]), wrap(k[2])]);
            let xi = grid.wavevector(plus);
            // Orientation perpendicular to xi keeps the mode divergence-free.
            let perp = [-xi[1], xi[0], 0.0];
            let norm = (perp[0] * perp[0] + perp[1] * perp[1]).sqrt().max(1e-300);
            let minus = grid.conjugate_flat(plus);
            for i in 0..n {
                f.component_mut(i)[plus] = Complex64::new(0.5 * perp[i] / norm, 0.0);
                f.component_mut(i)[minus] = Complex64::new(0.5 * perp[i] / norm, 0.0);
            }
            return leray_project(&f);
        }
        _ => {
            for flat in 1..pts {
                if !grid.dealias_keep(flat) {
                    continue;
                }
                let r = grid.xi_norm2(flat).sqrt();
                let env = match data.spectrum {
                    SpectrumKind::Peaked => r.powi(4) * (-grid.xi_norm2(flat) / (data.xi0 * data.xi0)).exp(),
                    SpectrumKind::CriticalFlat => 1.0,
                    SpectrumKind::SingleMode { .. } => unreachable!(),
                };
                for i in 0..n {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    raw[i * pts + flat] = Complex64::new(re, im) * env;
                }
            }
        }
    }

    // Hermitian symmetrization, then projection (both frequency-diagonal).
    let mut f = SpectralField::zeros(*grid, n);
    for i in 0..n {
        let comp = f.component_mut(i);
        for flat in 1..pts {
            let conj_flat = grid.conjugate_flat(flat);
            comp[flat] = 0.5 * (raw[i * pts + flat] + raw[i * pts + conj_flat].conj());
        }
    }
    let f = leray_project(&f)?;
    match data.spectrum {
        // Pin each dyadic shell's sup to 2^j exactly: the borderline profile
        // with equal regularity -1 mass per scale, immune to draw-to-draw
        // spectral wobble and to sparsely populated edge shells.
        SpectrumKind::CriticalFlat => normalize_per_shell(grid, &f, |j| 2f64.powi(j)),
        _ => Ok(f),
    }
}

/// Rescale disjoint shell groups (each mode assigned to its dominant
/// cutoff) so the group's physical sup equals `target(j)`.
fn normalize_per_shell(
    grid: &Grid,
    f: &SpectralField,
    target: impl Fn(i32) -> f64,
) -> Result<SpectralField> {
    let partition = DyadicPartition::build(grid)?;
    let pts = grid.total_points();
    let c = f.n_components();
    // Dominant shell per lattice point (-1: uncovered).
    let mut owner = vec![-1_i64; pts];
    for flat in 1..pts {
        let mut best = (0.0f64, -1_i64);
        for j in partition.shells() {
            let w = partition.cutoff(j, flat);
            if w > best.0 {
                best = (w, j as i64);
            }
        }
        owner[flat] = best.1;
    }
    let mut out = f.clone();
    for j in partition.shells() {
        let mut group = SpectralField::zeros(*grid, c);
        let mut occupied = false;
        for comp in 0..c {
            let src = f.component(comp);
            let dst = group.component_mut(comp);
            for flat in 1..pts {
                if owner[flat] == j as i64 {
                    dst[flat] = src[flat];
                    occupied = true;
                }
            }
        }
        if !occupied {
            continue;
        }
        let sup = group.max_abs_physical()?;
        if sup <= 0.0 {
            continue;
        }
        let scale = target(j) / sup;
        for comp in 0..c {
            let dst = out.component_mut(comp);
            for flat in 1..pts {
                if owner[flat] == j as i64 {
                    dst[flat] *= scale;
                }
            }
        }
    }
    Ok(out)
}

/// Unit director `normalize(e3 + delta * random perturbation)`; the
/// perturbation is low-pass smooth by default and scale-flat (equal sup
/// per dyadic shell) for critical-flat campaigns.
pub fn random_director(grid: &Grid, data: &InitialData, delta: f64, seed: u64) -> Result<SpectralField> {
    let pts = grid.total_points();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6469_7265_6374_6f72);
    let flat_spectrum = matches!(data.spectrum, SpectrumKind::CriticalFlat);
    let mut raw = vec![Complex64::default(); 3 * pts];
    for c in 0..3 {
        for flat in 1..pts {
            if !grid.dealias_keep(flat) {
                continue;
            }
            let env = if flat_spectrum {
                1.0
            } else {
                (-grid.xi_norm2(flat) / (data.xi0 * data.xi0)).exp()
            };
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            raw[c * pts + flat] = Complex64::new(re, im) * env;
        }
    }
    let mut r = SpectralField::zeros(*grid, 3);
    for c in 0..3 {
        let comp = r.component_mut(c);
        for flat in 1..pts {
            let conj_flat = grid.conjugate_flat(flat);
            comp[flat] = 0.5 * (raw[c * pts + flat] + raw[c * pts + conj_flat].conj());
        }
    }
    if flat_spectrum {
        r = normalize_per_shell(grid, &r, |_| 1.0)?;
    }
    // Normalize the perturbation to unit sup so delta controls its size.
    let sup = r.max_abs_physical()?;
    if sup > 0.0 {
        r = r.scaled(1.0 / sup);
    }
    let mut phys = r.scaled(delta).to_physical()?;
    for p in 0..pts {
        phys[2 * pts + p] += 1.0;
        let mut s = 0.0;
        for c in 0..3 {
            s += phys[c * pts + p] * phys[c * pts + p];
        }
        let mag = s.sqrt();
        for c in 0..3 {
            phys[c * pts + p] /= mag;
        }
    }
    SpectralField::from_physical(*grid, 3, &phys)
}

/// Generate data with the measured norm split evenly and summing to the
/// target: the velocity is scaled linearly, the director perturbation
/// amplitude is solved for by a secant iteration (its Carleson seminorm is
/// only approximately linear in the amplitude).
pub fn generate_initial_data(
    grid: &Grid,
    data: &InitialData,
    epsilon_target: f64,
    carleson: &CarlesonConfig,
    seed: u64,
) -> Result<(SpectralField, SpectralField)> {
    if !(epsilon_target > 0.0) {
        return Err(CoreError::InvalidConfig("epsilon_target must be positive".into()));
    }
    let half = epsilon_target / 2.0;

    let u_raw = random_velocity(grid, data, seed)?;
    let bu = bmo_minus1_norm(&u_raw, carleson)?;
    if bu == 0.0 {
        return Err(CoreError::InvalidConfig("velocity draw is identically zero".into()));
    }
    let u = u_raw.scaled(half / bu);

    let mut delta = data.director_delta.min(0.9);
    let mut d = random_director(grid, data, delta, seed)?;
    let mut norm = bmo_seminorm(&d, carleson)?;
    for _ in 0..8 {
        if norm > 0.0 && ((norm - half) / half).abs() < 1e-3 {
            break;
        }
        if norm <= 0.0 {
            break;
        }
        delta = (delta * half / norm).min(0.9);
        d = random_director(grid, data, delta, seed)?;
        norm = bmo_seminorm(&d, carleson)?;
    }

    Ok((u, d))
}
