//! Command-line contract: file layout, frozen CSV columns, exit codes.

mod common;

use std::fs;
use std::process::Command;

use switchsched::cli::commands::{TRACE_COLUMNS, trace_file_name};
use switchsched::cli::{cmd_run, load, Overrides};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_switchsched"))
}

fn short_run() -> Overrides {
    Overrides {
        seeds: Some(vec![1]),
        horizon: Some(100),
    }
}

#[test]
fn golden_trace() {
    let dir = tempfile::tempdir().unwrap();
    let loaded = load(common::scenario_path("sec6.json"), &short_run()).unwrap();
    cmd_run(&loaded, dir.path()).unwrap();
    let produced = fs::read_to_string(dir.path().join(trace_file_name(1))).unwrap();
    let golden = include_str!("golden/trace_sec6_seed1_h100.csv");
    assert_eq!(produced, golden);
    assert_eq!(produced.lines().next().unwrap(), TRACE_COLUMNS.join(","));
    assert_eq!(produced.lines().count(), 101);
}

#[test]
fn outputs_are_reproducible_and_complete() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let overrides = Overrides {
        seeds: Some(vec![3, 4]),
        horizon: Some(500),
    };
    let loaded = load(common::scenario_path("regime_halving.json"), &overrides).unwrap();
    let summary = cmd_run(&loaded, a.path()).unwrap();
    cmd_run(&loaded, b.path()).unwrap();
    for seed in [3, 4] {
        let name = trace_file_name(seed);
        assert_eq!(fs::read(a.path().join(&name)).unwrap(), fs::read(b.path().join(&name)).unwrap());
    }
    assert_eq!(summary.runs.len(), 2);
    assert!((summary.lp_reference.at_lambda.unwrap() - 0.8).abs() < 1e-9);
    assert!((summary.lp_reference.at_lambda_plus_gap.unwrap() - 1.2).abs() < 1e-9);

    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("summary.json")).unwrap()).unwrap();
    assert!(json["lp_reference"]["at_lambda_plus_gap"].is_number());
    assert_eq!(json["runs"][0]["seed"], 3);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("manifest.json")).unwrap()).unwrap();
    use sha2::Digest;
    let text = fs::read(common::scenario_path("regime_halving.json")).unwrap();
    assert_eq!(manifest["config_sha256"], hex::encode(sha2::Sha256::digest(&text)));
    assert_eq!(manifest["seeds"], serde_json::json!([3, 4]));
}

#[test]
fn empty_seed_list_is_a_validation_error() {
    let err = load(
        common::scenario_path("sec6.json"),
        &Overrides {
            seeds: Some(vec![]),
            horizon: None,
        },
    )
    .unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn binary_exit_codes() {
    let sec6 = common::scenario_path("sec6.json");
    let out = bin().args(["validate", "--config"]).arg(&sec6).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["lp_dimension"], 608);

    let out = bin().args(["lp", "--config"]).arg(&sec6).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["status"], "optimal");

    let dir = tempfile::tempdir().unwrap();
    let mut cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(&sec6).unwrap()).unwrap();
    for row in cfg["arrivals"]["rates"].as_array_mut().unwrap() {
        for x in row.as_array_mut().unwrap() {
            *x = serde_json::json!(x.as_f64().unwrap() * 5.0);
        }
    }
    let heavy = dir.path().join("heavy.json");
    fs::write(&heavy, cfg.to_string()).unwrap();
    let out = bin().args(["lp", "--config"]).arg(&heavy).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["status"], "infeasible");

    cfg["policy"]["eps_s"] = serde_json::json!(1.5);
    cfg["channel"]["mu"] = serde_json::json!([0.5, 0.5, 0.5, 0.5]);
    let bad = dir.path().join("bad.json");
    fs::write(&bad, cfg.to_string()).unwrap();
    let out = bin().args(["validate", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("policy.eps_s") && stderr.contains("channel.mu"), "{stderr}");

    let out = bin()
        .args(["run", "--horizon", "50", "--seeds", "1,2", "--config"])
        .arg(&sec6)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("out").join("trace_seed2.csv").exists());

    let out = bin().args(["validate", "--config", "/nonexistent.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
