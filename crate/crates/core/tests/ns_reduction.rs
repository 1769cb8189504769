//! With a constant director the system reduces to incompressible
//! Navier-Stokes. An independent vorticity-streamfunction pseudo-spectral
//! solver provides the oracle trajectory, and a direct convolution sum
//! provides an FFT-free oracle for the momentum nonlinearity.

mod common;

use common::{constant_director, ns_reduction_mismatch};
use num_complex::Complex64;
use nematic_core::field::SpectralField;
use nematic_core::grid::Grid;
use nematic_core::solver::{
    advance, leray_project, momentum_rhs, random_velocity, InitialData, SolverConfig, SolverState,
    SpectrumKind,
};

#[test]
fn velocity_trajectory_matches_vorticity_oracle_over_100_steps() {
    let g = Grid::new(2, 64, Grid::DEFAULT_PERIOD).unwrap();
    let u0 = random_velocity(&g, &InitialData::default(), 77).unwrap();
    // Order-one amplitude so the nonlinearity is exercised.
    let scale = 0.8 / u0.max_abs_physical().unwrap();
    let u0 = u0.scaled(scale);
    let worst = ns_reduction_mismatch(g, &u0, 0.05, 100);
    assert!(
        worst <= 1e-8,
        "relative vorticity mismatch {worst:.3e} after 100 steps"
    );
}

/// Direct circular-convolution evaluation of -P div(u (x) u), the FFT-free
/// oracle for the momentum nonlinearity.
fn momentum_oracle(u: &SpectralField) -> SpectralField {
    let g = *u.grid();
    let n = g.points_per_dim();
    let pts = g.total_points();
    let masked = u.dealiased();
    let mut tensor = vec![Complex64::default(); 4 * pts];
    for i in 0..2 {
        for j in 0..2 {
            let a = masked.component(i);
            let b = masked.component(j);
            let dst = &mut tensor[(i * 2 + j) * pts..(i * 2 + j + 1) * pts];
            for ka in 0..n {
                for kb in 0..n {
                    let k = ka * n + kb;
                    let mut acc = Complex64::default();
                    for pa in 0..n {
                        for pb in 0..n {
                            let p = pa * n + pb;
                            let qa = (ka + n - pa) % n;
                            let qb = (kb + n - pb) % n;
                            acc += a[p] * b[qa * n + qb];
                        }
                    }
                    dst[k] = acc;
                }
            }
        }
    }
    let tensor = SpectralField::from_coeffs(g, 4, tensor).unwrap().dealiased();
    let mut div = SpectralField::zeros(g, 2);
    for i in 0..2 {
        for flat in 0..pts {
            let xi = g.wavevector(flat);
            let mut z = Complex64::default();
            for j in 0..2 {
                z += Complex64::new(0.0, xi[j]) * tensor.component(i * 2 + j)[flat];
            }
            div.component_mut(i)[flat] = -z;
        }
    }
    leray_project(&div).unwrap()
}

#[test]
fn momentum_rhs_matches_convolution_oracle() {
    let g = Grid::new(2, 16, Grid::DEFAULT_PERIOD).unwrap();
    let u = random_velocity(&g, &InitialData::default(), 5).unwrap();
    let scale = 1.0 / u.max_abs_physical().unwrap();
    let u = u.scaled(scale);
    let d = constant_director(g);
    let fast = momentum_rhs(&u, &d, true).unwrap();
    let slow = momentum_oracle(&u);
    let diff = fast.sub(&slow).max_abs_coeff();
    let amp = slow.max_abs_coeff();
    assert!(diff <= 1e-10 * amp.max(1.0), "diff {diff:.3e} vs amp {amp:.3e}");
}

#[test]
fn taylor_green_nonlinearity_is_a_pure_gradient() {
    // For the Taylor-Green vortex the advection term is a gradient, so the
    // projected momentum nonlinearity vanishes identically.
    let g = Grid::new(2, 32, Grid::DEFAULT_PERIOD).unwrap();
    let pts = g.total_points();
    let a = 2.0 * g.fundamental_wavenumber();
    let mut samples = vec![0.0f64; 2 * pts];
    for flat in 0..pts {
        let x = g.position(flat);
        samples[flat] = (a * x[0]).sin() * (a * x[1]).cos();
        samples[pts + flat] = -(a * x[0]).cos() * (a * x[1]).sin();
    }
    let u = SpectralField::from_physical(g, 2, &samples).unwrap();
    let d = constant_director(g);
    let rhs = momentum_rhs(&u, &d, true).unwrap();
    assert!(rhs.max_abs_coeff() < 1e-12, "residual {}", rhs.max_abs_coeff());
}

#[test]
fn single_mode_velocity_is_linear_oracle() {
    // Amplitude 1e-8: the nonlinearity is negligible and each mode decays
    // by its heat factor.
    let g = Grid::new(2, 32, Grid::DEFAULT_PERIOD).unwrap();
    let data = InitialData {
        spectrum: SpectrumKind::SingleMode { k: [3, 0, 0] },
        ..InitialData::default()
    };
    let u0 = random_velocity(&g, &data, 0).unwrap().scaled(1e-8);
    let cfg = SolverConfig {
        dt_max: 0.02,
        ..SolverConfig::default()
    };
    let mut state = SolverState::new(u0.clone(), constant_director(g)).unwrap();
    while state.t < 1.0 - 1e-12 {
        let dt = 0.02f64.min(1.0 - state.t);
        state = advance(&state, &cfg, dt).unwrap();
    }
    let flat = g.flatten([3, 0, 0]);
    let xi2 = g.xi_norm2(flat);
    for c in 0..2 {
        let expected = u0.component(c)[flat] * (-xi2).exp();
        let got = state.u.component(c)[flat];
        if expected.norm() > 1e-14 {
            assert!(
                (got - expected).norm() / expected.norm() < 1e-6,
                "component {c}: got {got}, expected {expected}"
            );
        }
    }
}
