//! End-to-end runs of the `amd` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn amd(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amd"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("AMD_SEED")
        .output()
        .expect("binary runs")
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn csv_rows(dir: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(dir.join("data.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn decompose_appendix_b() {
    let tmp = tempfile::tempdir().unwrap();
    let out = amd(&["decompose", "--preset", "appendix-b"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = report(tmp.path());
    assert_eq!(rep["summary"]["blocks"], serde_json::json!([[2, 2], [1, 4]]));
    let eig: Vec<f64> = serde_json::from_value(rep["result"]["blocks"][0]["fixed_state_eigenvalues"].clone()).unwrap();
    assert!((eig[0] - 0.25).abs() < 1e-9 && (eig[1] - 0.75).abs() < 1e-9, "{eig:?}");
    assert_eq!(rep["result"]["fixed_point_dimension"], 5);
}

#[test]
fn veff_of_first_spin_on_noiseless_qubit() {
    let tmp = tempfile::tempdir().unwrap();
    let out = amd(&["veff", "--preset", "appendix-b", "--v", "sigma-z@1"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let coeffs = &report(tmp.path())["summary"]["pauli_coefficients"];
    // The basis of the doublet is gauge dependent, so only the norm of the
    // traceless part (1/3) and the identity part (1/6) are pinned.
    let x = coeffs["X"].as_f64().unwrap_or(0.0);
    let z = coeffs["Z"].as_f64().unwrap_or(0.0);
    assert!(((x * x + z * z).sqrt() - 1.0 / 3.0).abs() < 1e-9, "x = {x}, z = {z}");
    assert!((coeffs["I"].as_f64().unwrap() - 1.0 / 6.0).abs() < 1e-9);
}

#[test]
fn closed_sweep_scan_scales() {
    let tmp = tempfile::tempdir().unwrap();
    let out = amd(&["scan", "--preset", "closed-sweep", "--T", "10,30,100,300,1000", "--plot"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(tmp.path());
    assert_eq!(rows.len(), 5);
    let slope = report(tmp.path())["summary"]["fitted_slope"].as_f64().unwrap();
    assert!(slope <= -0.8, "slope {slope}");
    assert!(fs::read_to_string(tmp.path().join("plot.svg")).unwrap().contains("<svg"));
}

#[test]
fn reports_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"schema": "amd-config/v1", "experiment": "decompose",
            "system": {"preset": "appendix-b"}, "parameters": {"seed": "0x1234"}}"#,
    )
    .unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = amd(&["decompose", "--config", cfg.to_str().unwrap()], dir);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(fs::read(a.join("report.json")).unwrap(), fs::read(b.join("report.json")).unwrap());
    assert_eq!(fs::read(a.join("data.csv")).unwrap(), fs::read(b.join("data.csv")).unwrap());
    assert_eq!(report(&a)["seed"], "0x1234");
}

#[test]
fn csv_matches_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = amd(&["gaps", "--preset", "appendix-b", "--s-points", "11"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = report(tmp.path());
    let samples = rep["result"]["gaps"]["samples"].as_array().unwrap();
    let rows = csv_rows(tmp.path());
    assert_eq!(rows.len(), samples.len());
    for (row, sample) in rows.iter().zip(samples) {
        let delta2: f64 = row[2].parse().unwrap();
        assert!((delta2 - sample["delta2"].as_f64().unwrap()).abs() <= 1e-12);
    }
}

#[test]
fn unknown_preset_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = amd(&["decompose", "--preset", "nope"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("appendix-b") && err.contains("closed-sweep"), "{err}");
}

#[test]
fn numerical_diagnostic_exits_3() {
    // H ∝ I with no noise: a single block and an empty B₂, so there is no gap.
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"schema": "amd-config/v1", "experiment": "gaps",
            "system": {"hamiltonian": [[[1, 0], [0, 0]], [[0, 0], [1, 0]]], "dissipators": []}}"#,
    )
    .unwrap();
    let out = amd(&["gaps", "--config", cfg.to_str().unwrap()], &tmp.path().join("o"));
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn mismatched_config_experiment_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"schema": "amd-config/v1", "experiment": "gaps", "system": {"preset": "depol-b"}}"#).unwrap();
    let out = amd(&["decompose", "--config", cfg.to_str().unwrap()], &tmp.path().join("o"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn presets_are_listed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = amd(&["presets"], tmp.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 5);
    for name in ["appendix-b", "holonomy-x", "holonomy-z", "holonomy-xx", "closed-sweep"] {
        assert!(text.contains(name), "{name} missing");
    }
}

#[test]
fn seed_comes_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_amd"))
        .args(["decompose", "--preset", "depol-b", "--out"])
        .arg(tmp.path())
        .env("AMD_SEED", "beef")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(report(tmp.path())["seed"], "0xbeef");
}

#[test]
fn holonomy_gate_is_extracted() {
    let tmp = tempfile::tempdir().unwrap();
    let out = amd(&["holonomy", "--preset", "holonomy-z"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let f = report(tmp.path())["summary"]["gate_fidelity"].as_f64().unwrap();
    assert!(f >= 0.98, "F = {f}");
    assert_eq!(csv_rows(tmp.path()).len(), 4);
}
