//! End-to-end checks of the command-line surface: exit codes, file
//! contracts, reproducibility, and config-file override semantics.

use std::path::Path;
use std::process::{Command, Output};

fn dilperc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dilperc"))
        .args(args)
        .output()
        .expect("spawn dilperc")
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn check_conditions_reports_contraction() {
    let dir = tempfile::tempdir().unwrap();
    let out = dilperc(&[
        "check-conditions",
        "--alpha",
        "0.1",
        "--gamma0",
        "1",
        "--potential",
        "tanh:0.2:1",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("conditions.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(json["report"]["e750_ok"], serde_json::json!(true));
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn exact_constant_potential_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = dilperc(&[
        "exact",
        "--N",
        "2",
        "--M",
        "1",
        "--gamma",
        "0",
        "--potential",
        "const:0.3",
        "--n-samples",
        "8",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("summary.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    let mean = json["mean"].as_f64().unwrap();
    assert!((mean - (std::f64::consts::LN_2 + 0.15)).abs() < 1e-12);
    assert_eq!(json["std_error"].as_f64().unwrap(), 0.0);
    // Batch CSV carries one row per sample with the documented columns.
    let csv = std::fs::read_to_string(dir.path().join("samples.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "seed,sample_index,statistic_name,value");
    assert_eq!(lines.count(), 8);
}

#[test]
fn reruns_and_worker_counts_are_byte_identical() {
    let base: Vec<String> = [
        "exact", "--N", "7", "--alpha", "0.3", "--gamma", "1.2", "--potential", "tanh:0.2:1",
        "--n-samples", "64", "--seed", "5",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();

    let mut payloads: Vec<Vec<u8>> = Vec::new();
    for workers in ["1", "2", "2"] {
        let dir = tempfile::tempdir().unwrap();
        let mut args: Vec<&str> = base.iter().map(String::as_str).collect();
        args.extend(["--workers", workers, "--out-dir", dir.path().to_str().unwrap()]);
        let out = dilperc(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        payloads.push(read(&dir.path().join("samples.csv")));
    }
    assert_eq!(payloads[0], payloads[1], "worker count changed the data");
    assert_eq!(payloads[1], payloads[2], "rerun changed the data");
}

#[test]
fn seed_change_changes_output() {
    let mut payloads: Vec<Vec<u8>> = Vec::new();
    for seed in ["5", "6"] {
        let dir = tempfile::tempdir().unwrap();
        let out = dilperc(&[
            "exact", "--N", "6", "--alpha", "0.3", "--gamma", "1.0", "--potential", "tanh:0.2:1",
            "--n-samples", "32", "--seed", seed, "--out-dir", dir.path().to_str().unwrap(),
        ]);
        assert!(out.status.success());
        payloads.push(read(&dir.path().join("samples.csv")));
    }
    assert_ne!(payloads[0], payloads[1]);
}

#[test]
fn config_file_flags_override_and_unknown_keys_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");

    // Full config, no flags beyond the required plumbing.
    std::fs::write(
        &cfg,
        "N = 6\nalpha = 0.3\ngamma = 1.0\npotential = tanh:0.2:1\nn-samples = 16\nseed = 11\n",
    )
    .unwrap();
    let out_a = dir.path().join("a");
    let st = dilperc(&[
        "exact", "--config", cfg.to_str().unwrap(), "--out-dir", out_a.to_str().unwrap(),
    ]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));

    // Flag overrides the file seed; outputs must differ.
    let out_b = dir.path().join("b");
    let st = dilperc(&[
        "exact", "--config", cfg.to_str().unwrap(), "--seed", "12", "--out-dir",
        out_b.to_str().unwrap(),
    ]);
    assert!(st.status.success());
    assert_ne!(read(&out_a.join("samples.csv")), read(&out_b.join("samples.csv")));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_b.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["seed"], serde_json::json!(12));

    // Unknown key is named in the error, exit code 2.
    std::fs::write(&cfg, "gamna = 1\n").unwrap();
    let st = dilperc(&[
        "exact", "--config", cfg.to_str().unwrap(), "--N", "4", "--alpha", "0.3", "--gamma",
        "1", "--potential", "zero", "--out-dir", dir.path().join("c").to_str().unwrap(),
    ]);
    assert_eq!(st.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&st.stderr).contains("gamna"));
}

#[test]
fn capacity_and_parameter_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // N too large for exact enumeration: capacity, exit 3.
    let st = dilperc(&[
        "exact", "--N", "30", "--alpha", "0.3", "--gamma", "1", "--potential", "zero",
        "--n-samples", "4", "--out-dir", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(st.status.code(), Some(3));

    // gamma/N > 1: parameter error, exit 2, precondition named.
    let st = dilperc(&[
        "exact", "--N", "4", "--M", "2", "--gamma", "8", "--potential", "zero", "--n-samples",
        "4", "--out-dir", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(st.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&st.stderr).contains("gamma/N"));
}

#[test]
fn fixed_point_writes_loadable_population() {
    let dir = tempfile::tempdir().unwrap();
    let st = dilperc(&[
        "fixed-point", "--alpha", "0.1", "--gamma", "1", "--potential", "tanh:0.2:1",
        "--pop-size", "2000", "--tol", "0.001", "--seed", "3", "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let (pop, desc, seed) =
        dilperc::fixed_point::load_population(&dir.path().join("population.bin")).unwrap();
    assert_eq!(pop.values.len(), 2000);
    assert_eq!(desc, "tanh:0.2:1");
    assert_eq!(seed, 3);
    assert!(pop.values.iter().all(|v| (-1.0..=1.0).contains(v)));
    // CSV export matches the pool line for line.
    let csv = std::fs::read_to_string(dir.path().join("population.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2000);
}

#[test]
fn free_energy_emits_curve_and_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let st = dilperc(&[
        "free-energy", "--alpha", "0.5", "--gamma-max", "1", "--potential", "const:0.3",
        "--grid", "5", "--pop-size", "500", "--n-mc", "200", "--n-disorder", "16",
        "--N-list", "4,6", "--out-dir", dir.path().to_str().unwrap(),
    ]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let curve = std::fs::read_to_string(dir.path().join("rs_curve.csv")).unwrap();
    assert!(curve.starts_with("gamma,G,G_err,F\n"));
    assert_eq!(curve.lines().count(), 6);
    // Constant potential: F = log2 + alpha*c on every line.
    for line in curve.lines().skip(1) {
        let f: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((f - (std::f64::consts::LN_2 + 0.15)).abs() < 1e-12);
    }
    let cmp = std::fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    assert!(cmp.starts_with("N,pN,pN_err,F,abs_diff\n"));
    for line in cmp.lines().skip(1) {
        let abs_diff: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(abs_diff < 1e-12);
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert!(manifest["results"]["fitted_decay"].is_number());
}

#[test]
fn magnetization_law_emits_samples_and_distances() {
    let dir = tempfile::tempdir().unwrap();
    let st = dilperc(&[
        "magnetization-law", "--alpha", "0.25", "--gamma", "1", "--potential", "tanh:0.2:1",
        "--N", "6", "--m", "2", "--n-disorder", "64", "--pop-size", "2000", "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let emp = std::fs::read_to_string(dir.path().join("empirical.csv")).unwrap();
    assert!(emp.starts_with("mag1,mag2\n"));
    assert_eq!(emp.lines().count(), 65);
    let law: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("maglaw.json")).unwrap())
            .unwrap();
    assert!(law["joint_w1"].as_f64().unwrap() >= 0.0);
    assert!(law["marginal_w1"].as_f64().unwrap() >= 0.0);
}
