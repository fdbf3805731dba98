use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cgolab-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cgolab")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn selftest_passes_and_writes_report() {
    let dir = scratch("selftest");
    let cfg = write_config(&dir, r#"{"tau_sweep": [4, 8]}"#);
    let out = run(&["transforms-selftest", "--config", &cfg, "--output", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("transforms_selftest.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["command"], "transforms_selftest");
}

#[test]
fn malformed_config_exits_with_two() {
    let dir = scratch("bad");
    let cfg = write_config(&dir, r#"{"tau_sweep": [10, 5]}"#);
    assert_eq!(run(&["identity", "--config", &cfg]).status.code(), Some(2));
    let cfg = write_config(&dir, r#"{"xhat": [2.0, 0.0]}"#);
    assert_eq!(run(&["recover", "--config", &cfg]).status.code(), Some(2));
    let cfg = write_config(&dir, "not json");
    assert_eq!(run(&["carleman", "--config", &cfg]).status.code(), Some(2));
    assert_eq!(run(&["carleman", "--config", "/definitely/missing.json"]).status.code(), Some(2));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn dry_run_prints_the_resolved_config() {
    let dir = scratch("dry");
    let cfg = write_config(&dir, r#"{"seed": 11}"#);
    let out = run(&["identity", "--config", &cfg, "--dry-run"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["seed"], 11);
    assert_eq!(v["tau_sweep"], serde_json::json!([10.0, 20.0, 40.0, 80.0]));
    assert!(!dir.join("identity.json").exists());
}

#[test]
fn identity_reports_are_bit_identical_across_runs_and_job_counts() {
    let dir = scratch("det");
    let cfg = write_config(
        &dir,
        r#"{"tau_sweep": [5, 8, 11],
            "q1": [{"type": "gaussian_bump", "center": [0, 0.6], "width": 0.3, "height": 1}],
            "q2": [{"type": "gaussian_bump", "center": [0.1, 0.55], "width": 0.25, "height": 0.5}]}"#,
    );
    let out = dir.to_str().unwrap();
    run(&["identity", "--config", &cfg, "--output", out]);
    let first = fs::read(dir.join("identity.json")).unwrap();
    run(&["identity", "--config", &cfg, "--output", out, "--jobs", "1"]);
    let second = fs::read(dir.join("identity.json")).unwrap();
    assert!(!first.is_empty());
    assert_eq!(first, second);
}

#[test]
fn failing_checks_exit_with_one() {
    let dir = scratch("fail");
    // a spread limit below 1 cannot be met
    let cfg = write_config(&dir, r#"{"tau_sweep": [5, 10], "carleman_samples": 2, "tolerances": {"carleman_spread": 0.5}}"#);
    let out = run(&["carleman", "--config", &cfg, "--output", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(dir.join("carleman.json").exists());
}
