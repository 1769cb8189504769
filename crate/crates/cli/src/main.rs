//! Command-line surface: simulation runs, decay campaigns, flow-map
//! tracking, the property suite, and report emission.
//!
//! Exit codes: 0 on success, 1 on verification failure or a failed run,
//! 2 on configuration errors.

mod config;
mod manifest;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};

use config::{DecayConfig, SeedsFile, SimulateConfig};
use manifest::{ManifestBuilder, RunManifest};
use nematic_core::decay::{run_campaign, DecayReport, Target};
use nematic_core::io::{
    read_field_snapshot, write_field_snapshot, write_norm_csv_file, write_trajectory_csv,
};
use nematic_core::lp::NormKind;
use nematic_core::solver::{generate_initial_data, run_with_snapshots, SolverState};
use nematic_core::spaces::CarlesonConfig;
use nematic_core::trajectory::{
    holder_exponent_with_period, integrate_flow, SnapshotAdvector,
};
use nematic_core::verify::{run_property_suite, VerifyConfig};

#[derive(Parser)]
#[command(
    name = "nematic",
    version,
    about = "Pseudo-spectral nematic liquid crystal flow simulator and norm-verification harness"
)]
struct Cli {
    /// Worker threads (also env NEMATIC_THREADS; default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve the coupled system and write field snapshots plus a manifest.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (also env NEMATIC_OUT_DIR).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a weighted-norm decay campaign and emit CSV, verdict JSON and
    /// optional SVG log-log plots.
    Decay {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        plots: bool,
    },
    /// Integrate flow-map trajectories through stored snapshots.
    Trajectory {
        /// Directory produced by `simulate`.
        #[arg(long)]
        snapshots: PathBuf,
        /// JSON file with seed positions and optional pair indices.
        #[arg(long)]
        seeds: PathBuf,
        /// Final time.
        #[arg(long = "T")]
        t_end: f64,
        /// Integrator step.
        #[arg(long, default_value_t = 0.1)]
        dt: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Nonstandard exploratory drift: contraction coefficients applied
        /// to the director gradient, comma separated (3 values).
        #[arg(long, value_delimiter = ',', num_args = 3)]
        grad_d_weight: Option<Vec<f64>>,
    },
    /// Run the property suite; nonzero exit on any failing property.
    Verify {
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Write verify.json into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Inject a known bug as a negative control; the suite must fail.
        #[arg(long)]
        negative_control: bool,
    },
    /// Summarize an output directory (decay verdicts, suite reports,
    /// trajectory fits); optionally regenerate plots.
    Report {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        plots: bool,
    },
}

enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
    ChecksFailed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("NEMATIC_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        // Results are thread-count independent: reductions are max or
        // indexed merges.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::ChecksFailed) => ExitCode::from(1),
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn out_dir(explicit: Option<PathBuf>, default_name: &str) -> PathBuf {
    explicit.unwrap_or_else(|| {
        let base = std::env::var("NEMATIC_OUT_DIR").unwrap_or_else(|_| ".".into());
        Path::new(&base).join(default_name)
    })
}

fn run(cmd: Command) -> std::result::Result<(), Failure> {
    match cmd {
        Command::Simulate { config, out } => {
            let cfg: SimulateConfig = config::load(&config).map_err(Failure::Config)?;
            let built = SimulateInputs::build(&cfg).map_err(Failure::Config)?;
            let dir = out_dir(out, "simulate-out");
            cmd_simulate(&cfg, built, &dir).map_err(Failure::Run)?;
            Ok(())
        }
        Command::Decay { config, out, plots } => {
            let cfg: DecayConfig = config::load(&config).map_err(Failure::Config)?;
            let built = DecayInputs::build(&cfg).map_err(Failure::Config)?;
            let dir = out_dir(out, "decay-out");
            let report = cmd_decay(&cfg, built, &dir, plots).map_err(Failure::Run)?;
            if report.incomplete {
                eprintln!("campaign incomplete: a run halted; partial report written");
                return Err(Failure::ChecksFailed);
            }
            Ok(())
        }
        Command::Trajectory {
            snapshots,
            seeds,
            t_end,
            dt,
            out,
            grad_d_weight,
        } => {
            let seeds_file: SeedsFile = config::load(&seeds).map_err(Failure::Config)?;
            let weight = match grad_d_weight {
                None => None,
                Some(v) if v.len() == 3 => Some([v[0], v[1], v[2]]),
                Some(_) => {
                    return Err(Failure::Config(anyhow!(
                        "grad_d_weight needs exactly 3 values"
                    )))
                }
            };
            if !(t_end > 0.0) || !(dt > 0.0) {
                return Err(Failure::Config(anyhow!("T and dt must be positive")));
            }
            let dir = out_dir(out, "trajectory-out");
            cmd_trajectory(&snapshots, &seeds_file, t_end, dt, weight, &dir)
                .map_err(Failure::Run)?;
            Ok(())
        }
        Command::Verify {
            n,
            seed,
            out,
            negative_control,
        } => cmd_verify(n, seed, out, negative_control),
        Command::Report { dir, plots } => cmd_report(&dir, plots),
    }
}

/// Everything `simulate` needs, validated up front so schema and semantic
/// errors both surface as configuration failures.
struct SimulateInputs {
    grid: nematic_core::Grid,
    solver_cfg: nematic_core::solver::SolverConfig,
    data: nematic_core::solver::InitialData,
    times: Vec<f64>,
}

impl SimulateInputs {
    fn build(cfg: &SimulateConfig) -> Result<Self> {
        Ok(Self {
            grid: cfg.grid.build()?,
            solver_cfg: cfg.solver.build()?,
            data: cfg.initial_data.build()?,
            times: cfg.snapshot_times()?,
        })
    }
}

struct DecayInputs {
    grid: nematic_core::Grid,
    solver_cfg: nematic_core::solver::SolverConfig,
    campaign: nematic_core::decay::CampaignConfig,
}

impl DecayInputs {
    fn build(cfg: &DecayConfig) -> Result<Self> {
        Ok(Self {
            grid: cfg.grid.build()?,
            solver_cfg: cfg.solver.build()?,
            campaign: cfg.campaign.build()?,
        })
    }
}

fn cmd_simulate(cfg: &SimulateConfig, inputs: SimulateInputs, dir: &Path) -> Result<()> {
    let SimulateInputs {
        grid,
        solver_cfg,
        data,
        times,
    } = inputs;

    std::fs::create_dir_all(dir)?;
    let mut manifest = ManifestBuilder::new(dir, cfg, solver_cfg.seed)?;

    let carleson = CarlesonConfig::default_for(&grid)?;
    let (u0, d0) =
        generate_initial_data(&grid, &data, solver_cfg.epsilon_target, &carleson, solver_cfg.seed)?;
    let state = SolverState::new(u0, d0)?;
    let snapshots = run_with_snapshots(&state, &solver_cfg, &times)?;

    let mut diagnostics = Vec::new();
    for (i, snap) in snapshots.iter().enumerate() {
        let u_name = format!("snap_{i:04}_u.bin");
        let d_name = format!("snap_{i:04}_d.bin");
        write_field_snapshot(&dir.join(&u_name), &snap.u)?;
        write_field_snapshot(&dir.join(&d_name), &snap.d)?;
        manifest.record(&u_name)?;
        manifest.record(&d_name)?;
        diagnostics.push(serde_json::json!({
            "t": snap.t,
            "step_count": snap.step_count,
            "max_divergence": snap.diagnostics.max_divergence,
            "max_sphere_violation": snap.diagnostics.max_sphere_violation,
            "dt_used": snap.diagnostics.dt_used,
        }));
    }
    manifest.set_notes(serde_json::json!({
        "times": times,
        "diagnostics": diagnostics,
    }));
    let m = manifest.finish()?;
    println!(
        "simulate: {} snapshots in {} (config hash {})",
        times.len(),
        dir.display(),
        m.config_hash
    );
    Ok(())
}

fn cmd_decay(cfg: &DecayConfig, inputs: DecayInputs, dir: &Path, plots: bool) -> Result<DecayReport> {
    let DecayInputs {
        grid,
        solver_cfg,
        campaign,
    } = inputs;

    std::fs::create_dir_all(dir)?;
    let mut manifest = ManifestBuilder::new(dir, cfg, solver_cfg.seed)?;
    let report = run_campaign(&grid, &campaign, &solver_cfg)?;

    write_norm_csv_file(&dir.join("norms.csv"), &report.entries)?;
    manifest.record("norms.csv")?;

    let verdict = serde_json::json!({
        "schema": "decay-verdict/1",
        "config_hash": manifest.config_hash(),
        "report": report,
    });
    std::fs::write(dir.join("verdict.json"), serde_json::to_vec_pretty(&verdict)?)?;
    manifest.record("verdict.json")?;

    if plots {
        for name in write_decay_plots(dir, &report)? {
            manifest.record(&name)?;
        }
    }
    manifest.finish()?;

    let fitted = report.entries.iter().filter(|e| e.alpha.is_some()).count();
    println!(
        "decay: {} entries ({} fitted) in {}",
        report.entries.len(),
        fitted,
        dir.display()
    );
    Ok(report)
}

fn write_decay_plots(dir: &Path, report: &DecayReport) -> Result<Vec<String>> {
    let mut written = Vec::new();
    let mut keys: Vec<(u32, u32, Target)> = Vec::new();
    for e in &report.entries {
        if e.kind == NormKind::SupBesovM1 && !keys.contains(&(e.k, e.m, e.target)) {
            keys.push((e.k, e.m, e.target));
        }
    }
    for (k, m, target) in keys {
        let mut series = Vec::new();
        for e in &report.entries {
            if e.k == k && e.m == m && e.target == target && e.kind == NormKind::SupBesovM1 {
                series.push((
                    format!("eps={}", e.epsilon),
                    e.series.samples().to_vec(),
                ));
            }
        }
        let slope = -(m as f64 / 2.0 + k as f64);
        let plot = svg::LogLogPlot {
            title: format!("k={k} m={m} {} (guide slope {slope})", target.as_str()),
            series,
            guide_slopes: vec![slope],
        };
        let name = format!("decay_k{k}_m{m}_{}.svg", target.as_str());
        std::fs::write(dir.join(&name), plot.render())?;
        written.push(name);
    }
    Ok(written)
}

fn cmd_trajectory(
    snapshots_dir: &Path,
    seeds_file: &SeedsFile,
    t_end: f64,
    dt: f64,
    grad_d_weight: Option<[f64; 3]>,
    dir: &Path,
) -> Result<()> {
    // Load the simulate manifest and its snapshot inventory.
    let manifest_path = snapshots_dir.join("manifest.json");
    let manifest: RunManifest = serde_json::from_slice(
        &std::fs::read(&manifest_path)
            .with_context(|| format!("reading {}", manifest_path.display()))?,
    )?;
    let times: Vec<f64> = serde_json::from_value(
        manifest
            .notes
            .get("times")
            .cloned()
            .ok_or_else(|| anyhow!("manifest lacks snapshot times"))?,
    )?;
    let mut velocity = Vec::with_capacity(times.len());
    let mut director = Vec::with_capacity(times.len());
    for i in 0..times.len() {
        velocity.push(read_field_snapshot(
            &snapshots_dir.join(format!("snap_{i:04}_u.bin")),
        )?);
        if grad_d_weight.is_some() {
            director.push(read_field_snapshot(
                &snapshots_dir.join(format!("snap_{i:04}_d.bin")),
            )?);
        }
    }
    let grid = *velocity[0].grid();
    let n_dims = grid.n_dims();

    let mut advector = SnapshotAdvector::new(times.clone(), velocity)?;
    if let Some(w) = grad_d_weight {
        let grads = director
            .iter()
            .map(|d| d.gradient())
            .collect::<nematic_core::Result<Vec<_>>>()?;
        advector = advector.with_director_drift(grads, w)?;
        println!("trajectory: nonstandard director-gradient drift enabled ({w:?})");
    }

    let seeds: Vec<[f64; 3]> = seeds_file
        .seeds
        .iter()
        .map(|s| {
            if s.len() != n_dims {
                Err(anyhow!("seed {s:?} has wrong dimension (expected {n_dims})"))
            } else {
                let mut x = [0.0; 3];
                for (i, v) in s.iter().enumerate() {
                    x[i] = *v;
                }
                Ok(x)
            }
        })
        .collect::<Result<_>>()?;

    std::fs::create_dir_all(dir)?;
    let mut out_manifest = ManifestBuilder::new(
        dir,
        &serde_json::json!({
            "snapshots": snapshots_dir.display().to_string(),
            "seeds": seeds_file,
            "t_end": t_end,
            "dt": dt,
            "grad_d_weight": grad_d_weight,
        }),
        manifest.seed,
    )?;

    let traj = integrate_flow(&advector, &seeds, seeds_file.pairs.clone(), t_end, dt)?;
    {
        let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join("paths.csv"))?);
        write_trajectory_csv(&mut w, &traj, n_dims)?;
    }
    out_manifest.record("paths.csv")?;

    if !seeds_file.pairs.is_empty() {
        let fit = holder_exponent_with_period(&traj, t_end, grid.period())?;
        let verdict = serde_json::json!({
            "schema": "holder-verdict/1",
            "t": t_end,
            "alpha": fit.alpha,
            "prefactor": fit.prefactor,
            "residual": fit.residual,
            "pairs_used": fit.pairs_used,
            "pairs_excluded": fit.excluded,
        });
        std::fs::write(dir.join("holder.json"), serde_json::to_vec_pretty(&verdict)?)?;
        out_manifest.record("holder.json")?;
        println!(
            "trajectory: alpha = {:.5} from {} pairs ({} excluded)",
            fit.alpha, fit.pairs_used, fit.excluded
        );
    }
    out_manifest.finish()?;
    println!("trajectory: {} seeds to t = {t_end} in {}", seeds.len(), dir.display());
    Ok(())
}

fn cmd_verify(
    n: usize,
    seed: u64,
    out: Option<PathBuf>,
    negative_control: bool,
) -> std::result::Result<(), Failure> {
    let cfg = VerifyConfig {
        points_per_dim: n,
        seed,
        negative_control,
    };
    let report = run_property_suite(&cfg).map_err(|e| Failure::Config(e.into()))?;
    for c in &report.checks {
        println!(
            "{} {:44} metric {:12.5e} threshold {:12.5e}  {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.metric,
            c.threshold,
            c.detail
        );
    }
    let all = report.all_pass();
    println!(
        "verify: {}/{} properties passed",
        report.checks.iter().filter(|c| c.pass).count(),
        report.checks.len()
    );
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir).map_err(|e| Failure::Run(e.into()))?;
        std::fs::write(
            dir.join("verify.json"),
            serde_json::to_vec_pretty(&report).map_err(|e| Failure::Run(e.into()))?,
        )
        .map_err(|e| Failure::Run(e.into()))?;
    }
    if all {
        Ok(())
    } else {
        Err(Failure::ChecksFailed)
    }
}

fn cmd_report(dir: &Path, plots: bool) -> std::result::Result<(), Failure> {
    let mut found = false;

    let verdict_path = dir.join("verdict.json");
    if verdict_path.exists() {
        found = true;
        let value: serde_json::Value = serde_json::from_slice(
            &std::fs::read(&verdict_path).map_err(|e| Failure::Run(e.into()))?,
        )
        .map_err(|e| Failure::Run(e.into()))?;
        let report: DecayReport =
            serde_json::from_value(value.get("report").cloned().unwrap_or_default())
                .map_err(|e| Failure::Run(anyhow!("verdict.json schema: {e}")))?;
        println!("decay campaign ({} entries):", report.entries.len());
        println!("  eps      k m target             kind          alpha    expected flag");
        for e in &report.entries {
            println!(
                "  {:<8} {} {} {:<18} {:<13} {:>8} {:>8} {:?}",
                e.epsilon,
                e.k,
                e.m,
                e.target.as_str(),
                e.kind.as_str(),
                e.alpha.map(|a| format!("{a:.3}")).unwrap_or_else(|| "-".into()),
                e.expected_alpha
                    .map(|a| format!("{a:.2}"))
                    .unwrap_or_else(|| "-".into()),
                e.flag
            );
        }
        if !report.constants.is_empty() {
            println!("  constant stability (max/min over epsilon):");
            for r in &report.constants {
                println!(
                    "    k={} m={} {:<18} {:<13} ratio {:.3} pass {}",
                    r.k,
                    r.m,
                    r.target.as_str(),
                    r.kind.as_str(),
                    r.ratio,
                    r.pass
                );
            }
        }
        if plots {
            write_decay_plots(dir, &report).map_err(Failure::Run)?;
            println!("  plots regenerated in {}", dir.display());
        }
    }

    let verify_path = dir.join("verify.json");
    if verify_path.exists() {
        found = true;
        let value: serde_json::Value = serde_json::from_slice(
            &std::fs::read(&verify_path).map_err(|e| Failure::Run(e.into()))?,
        )
        .map_err(|e| Failure::Run(e.into()))?;
        if let Some(checks) = value.get("checks").and_then(|c| c.as_array()) {
            println!("property suite ({} checks):", checks.len());
            for c in checks {
                println!(
                    "  {} {}",
                    if c.get("pass").and_then(|p| p.as_bool()).unwrap_or(false) {
                        "PASS"
                    } else {
                        "FAIL"
                    },
                    c.get("name").and_then(|n| n.as_str()).unwrap_or("?")
                );
            }
        }
    }

    let holder_path = dir.join("holder.json");
    if holder_path.exists() {
        found = true;
        let value: serde_json::Value = serde_json::from_slice(
            &std::fs::read(&holder_path).map_err(|e| Failure::Run(e.into()))?,
        )
        .map_err(|e| Failure::Run(e.into()))?;
        println!(
            "trajectory separation fit: alpha = {} (pairs used {}, excluded {})",
            value.get("alpha").unwrap_or(&serde_json::Value::Null),
            value.get("pairs_used").unwrap_or(&serde_json::Value::Null),
            value.get("pairs_excluded").unwrap_or(&serde_json::Value::Null),
        );
    }

    if !found {
        return Err(Failure::Config(anyhow!(
            "no verdict.json, verify.json or holder.json under {}",
            dir.display()
        )));
    }
    Ok(())
}
