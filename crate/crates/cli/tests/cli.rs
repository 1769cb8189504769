//! End-to-end tests of the binary: schema validation, determinism, exit
//! codes, and the emitted artifacts.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nematic"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir()
        .join("nematic-cli-tests")
        .join(format!("{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_json(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn run_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const SIM_CONFIG: &str = r#"{
  "grid": { "points_per_dim": 32 },
  "solver": { "seed": 11, "epsilon_target": 0.02 },
  "t_end": 1.0,
  "snapshots": 10
}"#;

#[test]
fn simulate_writes_snapshots_and_manifest_deterministically() {
    let dir = tmp("simulate");
    let cfg = dir.join("sim.json");
    write_json(&cfg, SIM_CONFIG);

    let out1 = dir.join("run1");
    let out2 = dir.join("run2");
    run_ok(&bin().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(&out1).output().unwrap());
    run_ok(&bin().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(&out2).output().unwrap());

    // 10 snapshots, both fields, plus the manifest.
    for i in 0..10 {
        assert!(out1.join(format!("snap_{i:04}_u.bin")).exists());
        assert!(out1.join(format!("snap_{i:04}_d.bin")).exists());
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out1.join("manifest.json")).unwrap()).unwrap();
    let outputs = manifest["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 21, "20 field files plus the manifest itself");

    // Byte-identical snapshots and equal config hash across reruns.
    for i in 0..10 {
        for f in ["u", "d"] {
            let name = format!("snap_{i:04}_{f}.bin");
            assert_eq!(
                std::fs::read(out1.join(&name)).unwrap(),
                std::fs::read(out2.join(&name)).unwrap(),
                "{name} differs between identical runs"
            );
        }
    }
    let manifest2: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out2.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_hash"], manifest2["config_hash"]);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn simulate_rejects_invalid_grid_with_field_name() {
    let dir = tmp("badgrid");
    let cfg = dir.join("bad.json");
    write_json(
        &cfg,
        r#"{ "grid": { "points_per_dim": 24 }, "t_end": 1.0, "snapshots": 2 }"#,
    );
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("x"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "configuration errors exit 2");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("points_per_dim"),
        "message must name the field: {stderr}"
    );
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn simulate_rejects_unknown_fields() {
    let dir = tmp("unknown");
    let cfg = dir.join("bad.json");
    write_json(
        &cfg,
        r#"{ "grid": { "points_per_dim": 32, "typo_field": 1 }, "t_end": 1.0, "snapshots": 2 }"#,
    );
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("x"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("typo_field"));
    let _ = std::fs::remove_dir_all(&dir);
}

const DECAY_CONFIG: &str = r#"{
  "grid": { "points_per_dim": 32 },
  "solver": { "seed": 5 },
  "campaign": {
    "epsilons": [0.02],
    "t0": 1.0,
    "n_samples": 8,
    "derivative_orders": [[0, 0], [0, 1]],
    "norms": ["sup_besov_m1", "l1_besov_p1"],
    "fit_window": [0, 8]
  }
}"#;

#[test]
fn decay_emits_csv_verdict_and_plots_deterministically() {
    let dir = tmp("decay");
    let cfg = dir.join("decay.json");
    write_json(&cfg, DECAY_CONFIG);

    let out1 = dir.join("run1");
    let out2 = dir.join("run2");
    run_ok(
        &bin()
            .args(["decay", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out1)
            .arg("--plots")
            .output()
            .unwrap(),
    );
    run_ok(&bin().args(["decay", "--config"]).arg(&cfg).arg("--out").arg(&out2).output().unwrap());

    let csv = std::fs::read_to_string(out1.join("norms.csv")).unwrap();
    assert!(csv.starts_with("t,k,m,kind,value\n"), "documented column order");
    assert_eq!(
        std::fs::read(out1.join("norms.csv")).unwrap(),
        std::fs::read(out2.join("norms.csv")).unwrap(),
        "identical config and seed must give byte-identical CSV"
    );

    // Verdict JSON re-parses and re-serializes identically.
    let bytes = std::fs::read(out1.join("verdict.json")).unwrap();
    let value: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
    let reparsed = serde_json::to_vec_pretty(&value).unwrap();
    let again: serde_json::Value = serde_json::from_slice(&reparsed).unwrap();
    assert_eq!(value, again);
    assert_eq!(value["schema"], "decay-verdict/1");

    // Plot with the expected guide slope for (k, m) = (0, 1).
    let svg = std::fs::read_to_string(out1.join("decay_k0_m1_velocity.svg")).unwrap();
    assert!(
        svg.contains(r#"data-guide-slope="-0.5""#),
        "guide slope -1/2 for (k, m) = (0, 1)"
    );

    // Report summarizes the directory.
    let rep = bin().args(["report", "--dir"]).arg(&out1).output().unwrap();
    run_ok(&rep);
    assert!(String::from_utf8_lossy(&rep.stdout).contains("decay campaign"));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn decay_rejects_empty_time_grid() {
    let dir = tmp("decay-empty");
    let cfg = dir.join("decay.json");
    write_json(
        &cfg,
        r#"{
  "grid": { "points_per_dim": 32 },
  "campaign": {
    "epsilons": [0.02], "t0": 1.0, "n_samples": 0,
    "derivative_orders": [[0, 0]], "norms": ["sup_besov_m1"], "fit_window": [0, 4]
  }
}"#,
    );
    let out = bin()
        .args(["decay", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("x"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn trajectory_runs_on_simulate_output() {
    let dir = tmp("traj");
    let cfg = dir.join("sim.json");
    write_json(&cfg, SIM_CONFIG);
    let snaps = dir.join("snaps");
    run_ok(&bin().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(&snaps).output().unwrap());

    // Anchor plus dyadically separated partners (absolute separations).
    let seeds = dir.join("seeds.json");
    let mut seed_list = vec![vec![10.0, 12.0]];
    let mut pairs = Vec::new();
    for e in 4..=8 {
        let s = 2f64.powi(-e);
        seed_list.push(vec![10.0 + s, 12.0]);
        pairs.push((0usize, seed_list.len() - 1));
    }
    write_json(
        &seeds,
        &serde_json::to_string(&serde_json::json!({ "seeds": seed_list, "pairs": pairs })).unwrap(),
    );

    let out = dir.join("traj-out");
    let res = bin()
        .args(["trajectory", "--snapshots"])
        .arg(&snaps)
        .arg("--seeds")
        .arg(&seeds)
        .args(["--T", "1.0", "--dt", "0.05"])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    run_ok(&res);

    let paths = std::fs::read_to_string(out.join("paths.csv")).unwrap();
    assert!(paths.starts_with("seed,t,x0,x1\n"));
    let holder: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("holder.json")).unwrap()).unwrap();
    let alpha = holder["alpha"].as_f64().unwrap();
    assert!((alpha - 1.0).abs() < 0.2, "small-data flow: alpha {alpha}");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn verify_negative_control_fails_partition_property() {
    let out = bin()
        .args(["verify", "--n", "32", "--negative-control"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "injected bug must exit 1");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("FAIL partition_of_unity"),
        "partition property must fail: {stdout}"
    );
}

#[test]
fn verify_default_passes_and_lists_properties() {
    let dir = tmp("verify");
    let res = bin()
        .args(["verify", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    run_ok(&res);
    let stdout = String::from_utf8_lossy(&res.stdout);
    let n_props = stdout.lines().filter(|l| l.starts_with("PASS ")).count();
    assert!(n_props >= 12, "suite lists {n_props} properties");
    assert!(dir.join("verify.json").exists());

    let rep = bin().args(["report", "--dir"]).arg(&dir).output().unwrap();
    run_ok(&rep);
    assert!(String::from_utf8_lossy(&rep.stdout).contains("property suite"));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn report_on_empty_directory_is_a_config_error() {
    let dir = tmp("empty-report");
    let out = bin().args(["report", "--dir"]).arg(&dir).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let _ = std::fs::remove_dir_all(&dir);
}
