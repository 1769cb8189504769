use nematic_core::decay::{run_campaign, CampaignConfig, Target};
use nematic_core::grid::Grid;
use nematic_core::lp::NormKind;
use nematic_core::solver::{InitialData, SolverConfig, SpectrumKind};

fn main() {
    let grid = Grid::new(2, 64, Grid::DEFAULT_PERIOD).unwrap();
    let cfg = CampaignConfig {
        epsilons: vec![0.01, 0.02, 0.05],
        t0: 1.0,
        n_samples: 13,
        derivative_orders: vec![(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2), (2, 0), (2, 1), (2, 2)],
        norms: vec![NormKind::SupBesovM1],
        fit_window: (2, 13),
        data: InitialData { spectrum: SpectrumKind::CriticalFlat, ..InitialData::default() },
        linear_only: false,
        exponent_tol: 0.2,
    };
    let solver_cfg = SolverConfig { seed: 42, ..SolverConfig::default() };
    let t0 = std::time::Instant::now();
    let report = run_campaign(&grid, &cfg, &solver_cfg).unwrap();
    println!("campaign took {:?}", t0.elapsed());
    for e in &report.entries {
        if e.kind != NormKind::SupBesovM1 { continue; }
        println!(
            "eps={:<5} k={} m={} {:<18} alpha={:>8} expect={:>5} flag={:?} pass={:?} C/eps={:.3}",
            e.epsilon, e.k, e.m, e.target.as_str(),
            e.alpha.map(|a| format!("{a:.3}")).unwrap_or("-".into()),
            e.expected_alpha.map(|a| format!("{a:.1}")).unwrap_or("-".into()),
            e.flag, e.pass, e.c_over_epsilon
        );
    }
    println!("--- constant table ---");
    for r in &report.constants {
        println!("k={} m={} {:<18} {:<12} ratio={:.3} pass={} consts={:?}",
            r.k, r.m, r.target.as_str(), r.kind.as_str(), r.ratio, r.pass, r.constants);
    }
    let _ = Target::Velocity;
}
