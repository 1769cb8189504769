use nematic_core::grid::Grid;
use nematic_core::solver::{generate_initial_data, run_with_snapshots, InitialData, SolverConfig, SolverState, SpectrumKind};
use nematic_core::spaces::CarlesonConfig;
use nematic_core::trajectory::*;

fn main() {
    let grid = Grid::new(2, 64, Grid::DEFAULT_PERIOD).unwrap();
    let carleson = CarlesonConfig::default_for(&grid).unwrap();
    let data = InitialData { spectrum: SpectrumKind::CriticalFlat, ..InitialData::default() };
    let t_end = 8.0;
    let snap_times: Vec<f64> = (0..=32).map(|i| i as f64 * t_end / 32.0).collect();
    let scales = default_separation_scales();
    let (seeds, pairs) = dyadic_pair_seeds(&grid, 8, &scales, 2718);

    for eps in [0.01f64, 0.02, 0.05] {
        let t0 = std::time::Instant::now();
        let (u0, d0) = generate_initial_data(&grid, &data, eps, &carleson, 99).unwrap();
        let state = SolverState::new(u0, d0).unwrap();
        let cfg = SolverConfig { ..SolverConfig::default() };
        let snaps = run_with_snapshots(&state, &cfg, &snap_times).unwrap();
        let max_grad: f64 = snaps.iter().map(|s| s.u.gradient().unwrap().max_abs_physical().unwrap()).fold(0.0, f64::max);
        let adv = SnapshotAdvector::new(snap_times.clone(), snaps.iter().map(|s| s.u.clone()).collect()).unwrap();
        let traj = integrate_flow(&adv, &seeds, pairs.clone(), t_end, 0.1).unwrap();
        let fit = holder_exponent_with_period(&traj, t_end, grid.period()).unwrap();
        println!("eps={eps}: alpha={:.5} 1-alpha={:.2e} kappa={:.3} resid={:.3e} excl={} maxgrad={:.3e} [{:?}]",
            fit.alpha, 1.0 - fit.alpha, (1.0 - fit.alpha) / eps, fit.residual, fit.excluded, max_grad, t0.elapsed());
    }

    // Controls.
    let still = AnalyticVelocity::new(|_, _| [0.0, 0.0, 0.0]);
    let traj = integrate_flow(&still, &seeds, pairs.clone(), t_end, 0.1).unwrap();
    println!("zero: alpha={:.6}", holder_exponent(&traj, t_end).unwrap().alpha);
    let c = [0.3, -0.2, 0.0];
    let trans = AnalyticVelocity::new(move |_, _| c);
    let traj = integrate_flow(&trans, &seeds, pairs.clone(), t_end, 0.1).unwrap();
    println!("translation: alpha={:.6}", holder_exponent(&traj, t_end).unwrap().alpha);
    let l = grid.period();
    let rot = AnalyticVelocity::new(move |x, _| [-0.4 * (x[1] - l / 2.0), 0.4 * (x[0] - l / 2.0), 0.0]);
    let traj = integrate_flow(&rot, &seeds, pairs, t_end, 0.01).unwrap();
    println!("rotation: alpha={:.6}", holder_exponent(&traj, t_end).unwrap().alpha);
}
