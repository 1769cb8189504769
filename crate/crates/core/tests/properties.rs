//! Property-based invariants over randomized inputs.

use proptest::prelude::*;
use proptest::test_runner::FileFailurePersistence;

use nematic_core::field::SpectralField;
use nematic_core::grid::Grid;
use nematic_core::heat::heat_semigroup;
use nematic_core::lp::{besov_norm, BesovIndex, DyadicPartition};
use nematic_core::solver::{divergence_residual, leray_project, random_velocity, InitialData};

fn grid() -> Grid {
    Grid::new(2, 32, Grid::DEFAULT_PERIOD).unwrap()
}

fn seeded_field(seed: u64, n_components: usize) -> SpectralField {
    // Reuse the divergence-free generator for a deterministic random field.
    let g = grid();
    let u = random_velocity(&g, &InitialData::default(), seed).unwrap();
    if n_components == 2 {
        u
    } else {
        let mut f = SpectralField::zeros(g, 1);
        f.component_mut(0).copy_from_slice(u.component(0));
        f
    }
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 12,
        failure_persistence: Some(Box::new(FileFailurePersistence::Off)),
        .. ProptestConfig::default()
    })]

    #[test]
    fn transform_round_trip(seed in 0u64..1000) {
        let f = seeded_field(seed, 1);
        let phys = f.to_physical().unwrap();
        let back = SpectralField::from_physical(*f.grid(), 1, &phys).unwrap();
        let rel = back.sub(&f).max_abs_coeff() / f.max_abs_coeff().max(1e-300);
        prop_assert!(rel < 1e-12);
    }

    #[test]
    fn semigroup_additivity(seed in 0u64..1000, t1 in 0.01f64..2.0, t2 in 0.01f64..2.0) {
        let f = seeded_field(seed, 1);
        let a = heat_semigroup(&heat_semigroup(&f, t1).unwrap(), t2).unwrap();
        let b = heat_semigroup(&f, t1 + t2).unwrap();
        let rel = a.sub(&b).max_abs_coeff() / f.max_abs_coeff().max(1e-300);
        prop_assert!(rel < 1e-12);
    }

    #[test]
    fn besov_homogeneity(seed in 0u64..1000, alpha in -5.0f64..5.0) {
        prop_assume!(alpha.abs() > 1e-3);
        let g = grid();
        let p = DyadicPartition::build(&g).unwrap();
        let f = seeded_field(seed, 1);
        let n = besov_norm(&f, &p, BesovIndex::MINUS_ONE_INF_INF).unwrap();
        let ns = besov_norm(&f.scaled(alpha), &p, BesovIndex::MINUS_ONE_INF_INF).unwrap();
        prop_assert!((ns - alpha.abs() * n).abs() < 1e-10 * n.max(1e-300));
    }

    #[test]
    fn projection_is_idempotent_and_divergence_free(seed in 0u64..1000) {
        let f = seeded_field(seed, 2);
        let p = leray_project(&f).unwrap();
        let scale = p.max_abs_coeff().max(1e-300);
        prop_assert!(divergence_residual(&p) < 1e-12 * scale);
        let pp = leray_project(&p).unwrap();
        prop_assert!(pp.sub(&p).max_abs_coeff() < 1e-12 * scale);
    }

    #[test]
    fn block_decomposition_is_linear(seed in 0u64..500, a in -3.0f64..3.0) {
        let g = grid();
        let p = DyadicPartition::build(&g).unwrap();
        let f = seeded_field(seed, 1);
        let h = seeded_field(seed + 1000, 1);
        let j = p.j_min() + 2;
        let lhs = p.block(&f.scaled(a).add(&h), j).unwrap();
        let rhs = p.block(&f, j).unwrap().scaled(a).add(&p.block(&h, j).unwrap());
        prop_assert!(lhs.sub(&rhs).max_abs_coeff() < 1e-12 * lhs.max_abs_coeff().max(1e-300));
    }
}

#[test]
fn decay_report_round_trips_through_json() {
    use nematic_core::decay::{run_campaign, CampaignConfig};
    use nematic_core::lp::NormKind;
    use nematic_core::solver::SolverConfig;

    let g = grid();
    let cfg = CampaignConfig {
        epsilons: vec![0.02],
        t0: 1.0,
        n_samples: 6,
        derivative_orders: vec![(0, 0)],
        norms: vec![NormKind::SupBesovM1],
        fit_window: (0, 6),
        linear_only: true,
        ..CampaignConfig::default()
    };
    let report = run_campaign(&g, &cfg, &SolverConfig::default()).unwrap();
    let json = serde_json::to_string_pretty(&report).unwrap();
    let back: nematic_core::decay::DecayReport = serde_json::from_str(&json).unwrap();
    let rejson = serde_json::to_string_pretty(&back).unwrap();
    assert_eq!(json, rejson, "verdict JSON must survive re-parse byte-for-byte");
}
