use nematic_core::grid::Grid;
use nematic_core::solver::*;
use nematic_core::spaces::CarlesonConfig;

fn main() {
    let grid = Grid::new(2, 64, Grid::DEFAULT_PERIOD).unwrap();
    let carleson = CarlesonConfig::default_for(&grid).unwrap();
    let (u0, d0) = generate_initial_data(&grid, &InitialData::default(), 0.02, &carleson, 5).unwrap();
    let cfg = SolverConfig::default();
    let t0 = std::time::Instant::now();
    let report = picard_solve(&u0, &d0, 1.0, 8, 16, &cfg).unwrap();
    println!("status {:?} in {:?}", report.status, t0.elapsed());
    println!("distances: {:?}", report.distances.iter().map(|d| format!("{d:.3e}")).collect::<Vec<_>>());
    println!("ratios: {:?}", report.ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>());
}
