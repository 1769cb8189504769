//! Shared oracles and helpers for the integration and acceptance suites.
//! The vorticity-streamfunction stepper here is an independent
//! implementation path kept deliberately separate from the library solver.
#![allow(dead_code)]

use num_complex::Complex64;
use nematic_core::field::SpectralField;
use nematic_core::grid::Grid;
use nematic_core::solver::{advance, SolverConfig, SolverState};

pub fn constant_director(grid: Grid) -> SpectralField {
    let mut d = SpectralField::zeros(grid, 3);
    d.component_mut(2)[0] = Complex64::new(1.0, 0.0);
    d
}

/// Vorticity of a 2D velocity field.
pub fn curl(u: &SpectralField) -> SpectralField {
    let g = *u.grid();
    let mut w = SpectralField::zeros(g, 1);
    for flat in 0..g.total_points() {
        let xi = g.wavevector(flat);
        let z = Complex64::new(0.0, xi[0]) * u.component(1)[flat]
            - Complex64::new(0.0, xi[1]) * u.component(0)[flat];
        w.component_mut(0)[flat] = z;
    }
    w
}

/// Velocity from vorticity (zero-mean fields).
pub fn biot_savart(w: &SpectralField) -> SpectralField {
    let g = *w.grid();
    let mut u = SpectralField::zeros(g, 2);
    for flat in 1..g.total_points() {
        let xi = g.wavevector(flat);
        let r2 = g.xi_norm2(flat);
        if r2 == 0.0 {
            continue;
        }
        let wz = w.component(0)[flat];
        u.component_mut(0)[flat] = Complex64::new(0.0, xi[1]) * wz / r2;
        u.component_mut(1)[flat] = Complex64::new(0.0, -xi[0]) * wz / r2;
    }
    u
}

/// Vorticity-form nonlinearity -div(u w), dealiased like the solver.
pub fn vorticity_rhs(w: &SpectralField) -> SpectralField {
    let g = *w.grid();
    let pts = g.total_points();
    let u = biot_savart(w).dealiased();
    let wd = w.dealiased();
    let up = u.to_physical().unwrap();
    let wp = wd.to_physical().unwrap();
    let mut flux = vec![0.0f64; 2 * pts];
    for i in 0..2 {
        for p in 0..pts {
            flux[i * pts + p] = up[i * pts + p] * wp[p];
        }
    }
    let flux = SpectralField::from_physical(g, 2, &flux).unwrap().dealiased();
    let mut rhs = SpectralField::zeros(g, 1);
    for flat in 0..pts {
        let xi = g.wavevector(flat);
        let z = Complex64::new(0.0, xi[0]) * flux.component(0)[flat]
            + Complex64::new(0.0, xi[1]) * flux.component(1)[flat];
        rhs.component_mut(0)[flat] = -z;
    }
    rhs
}

/// One integrating-factor RK4 step of the vorticity equation.
pub fn vorticity_step(w: &SpectralField, dt: f64) -> SpectralField {
    let g = *w.grid();
    let half: Vec<f64> = (0..g.total_points())
        .map(|flat| (-g.xi_norm2(flat) * dt / 2.0).exp())
        .collect();
    let full: Vec<f64> = (0..g.total_points())
        .map(|flat| (-g.xi_norm2(flat) * dt).exp())
        .collect();
    let e = |f: &SpectralField, t: &Vec<f64>| f.apply_symbol(|flat| t[flat]);

    let k1 = vorticity_rhs(w);
    let mut wa = w.clone();
    wa.add_scaled(&k1, dt / 2.0);
    let k2 = vorticity_rhs(&e(&wa, &half));
    let mut wb = e(w, &half);
    wb.add_scaled(&k2, dt / 2.0);
    let k3 = vorticity_rhs(&wb);
    let mut wc = e(w, &full);
    wc.add_scaled(&e(&k3, &half), dt);
    let k4 = vorticity_rhs(&wc);

    let mut out = e(w, &full);
    out.add_scaled(&e(&k1, &full), dt / 6.0);
    out.add_scaled(&e(&k2.add(&k3), &half), dt / 3.0);
    out.add_scaled(&k4, dt / 6.0);
    out
}

/// March the coupled solver with a fixed step size to `t_end`.
pub fn march(state: &SolverState, cfg: &SolverConfig, t_end: f64, dt: f64) -> SolverState {
    let mut s = state.clone();
    while s.t < t_end - 1e-12 {
        let step = dt.min(t_end - s.t);
        s = advance(&s, cfg, step).unwrap();
    }
    s
}

/// Worst relative vorticity mismatch between the solver trajectory (with a
/// constant director) and the independent vorticity oracle over `steps`
/// fixed-size steps.
pub fn ns_reduction_mismatch(grid: Grid, u0: &SpectralField, dt: f64, steps: usize) -> f64 {
    let cfg = SolverConfig {
        dt_max: dt,
        cfl_safety: 1.0,
        ..SolverConfig::default()
    };
    let mut state = SolverState::new(u0.clone(), constant_director(grid)).unwrap();
    let mut w = curl(u0);
    let mut worst = 0.0f64;
    for _ in 0..steps {
        state = advance(&state, &cfg, dt).unwrap();
        w = vorticity_step(&w, dt);
        let diff = curl(&state.u).sub(&w).max_abs_coeff();
        worst = worst.max(diff / w.max_abs_coeff());
    }
    worst
}
