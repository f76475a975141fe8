use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn piro(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_piro"))
        .current_dir(dir)
        .args(["--log-level", "warn"])
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn digest(path: &Path) -> String {
    hex::encode(Sha256::digest(fs::read(path).unwrap()))
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn missing_env_file_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = piro(tmp.path(), &["gen-demos", "--env", "no-such-env.json"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-such-env.json"));
}

#[test]
fn demos_are_byte_identical_for_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    for f in ["a.json", "b.json"] {
        let out = piro(tmp.path(), &["--seed", "3", "gen-demos", "--env", "gridworld7", "--n-traj", "20", "--out", f]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(digest(&tmp.path().join("a.json")), digest(&tmp.path().join("b.json")));
    let out = piro(tmp.path(), &["--seed", "4", "gen-demos", "--env", "gridworld7", "--n-traj", "20", "--out", "c.json"]);
    assert_eq!(code(&out), 0);
    assert_ne!(digest(&tmp.path().join("a.json")), digest(&tmp.path().join("c.json")));
}

#[test]
fn malformed_env_spec_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("env.json"), r#"{"kind":"gridworld","width":7}"#).unwrap();
    let out = piro(tmp.path(), &["gen-demos", "--env", "env.json"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn small_x_scale_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("cfg.json"), r#"{"x_scale":0.5}"#).unwrap();
    let out = piro(tmp.path(), &["train", "--algo", "piro", "--env", "gridworld7", "--config", "cfg.json"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("x_scale"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("cfg.json"), r#"{"reward_lr":0.1,"rewrad_lr":0.2}"#).unwrap();
    let out = piro(tmp.path(), &["train", "--algo", "ml-irl", "--env", "gridworld7", "--config", "cfg.json"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn trro_exact_run_reports_no_violations() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("cfg.json"), r#"{"c_mode":{"mode":"manual","value":1.0}}"#).unwrap();
    let out = piro(
        tmp.path(),
        &[
            "train", "--algo", "trro", "--env", "gridworld7", "--policy-mode", "exact", "--iterations", "15",
            "--config", "cfg.json", "--run-id", "t",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let run = tmp.path().join("runs/t");
    let report = json(&run.join("report.json"));
    assert_eq!(report["monotonicity_violations"], 0);
    assert!(report["final_likelihood"].as_f64().unwrap() > report["initial_likelihood"].as_f64().unwrap());
    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("iteration,likelihood,surrogate,eps,mu,j_gap,wall_ms\n"));
    assert_eq!(metrics.lines().count(), 16);
    assert_eq!(json(&run.join("config.json"))["irl"]["algo"], "trro");
    assert!(run.join("heat.csv").exists());
}

#[test]
fn piro_trains_from_demo_files() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&piro(tmp.path(), &["gen-demos", "--env", "gridworld7", "--out", "d.json"])), 0);
    fs::write(
        tmp.path().join("cfg.json"),
        r#"{"occupancy_mode":"sampled","k":2,"n":2,"reward_lr":0.5,"demo_batch":32,"rollout_len":40}"#,
    )
    .unwrap();
    let out = piro(
        tmp.path(),
        &[
            "train", "--algo", "piro", "--env", "gridworld7", "--demos", "d.json", "--config", "cfg.json",
            "--iterations", "10", "--run-id", "p",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let echoed = json(&tmp.path().join("runs/p/config.json"));
    assert_eq!(echoed["irl"]["occupancy_mode"], "sampled");
    assert_eq!(echoed["irl"]["m"], 10);
}

#[test]
fn theorem_suite_emits_one_report_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = piro(tmp.path(), &["--jobs", "2", "verify", "--suite", "theorem1", "--seeds", "100"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&tmp.path().join("runs/verify-theorem1/report.json"));
    assert_eq!(report["n_reports"], 100);
    assert_eq!(report["reports"].as_array().unwrap().len(), 100);
    assert_eq!(report["n_failed"], 0);
}

#[test]
fn default_suite_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = piro(tmp.path(), &["verify", "--seeds", "20"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn perturbed_bounds_fail_with_status_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = piro(tmp.path(), &["verify", "--suite", "lemmas", "--seeds", "10", "--rhs-scale", "0.01"]);
    assert_eq!(code(&out), 1);
    assert!(json(&tmp.path().join("runs/verify-lemmas/report.json"))["n_failed"].as_u64().unwrap() > 0);
}

#[test]
fn unknown_suite_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&piro(tmp.path(), &["verify", "--suite", "lemma7"])), 2);
}

#[test]
fn transfer_writes_its_report() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("t.json"),
        r#"{"recovery":{"irl":{"m":40,"k":2,"n":2,"reward_lr":1.0,"eps_target":0.5}},"rollouts":100}"#,
    )
    .unwrap();
    let out = piro(tmp.path(), &["transfer", "--config", "t.json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&tmp.path().join("runs/transfer/report.json"));
    assert_eq!(report["rollouts"], 100);
    assert!(report["success_rate"].as_f64().unwrap() > 0.5);
}

#[test]
fn c_compare_writes_both_curves() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.json"), r#"{"irl":{"m":5,"k":2,"n":1,"reward_lr":0.05}}"#).unwrap();
    let out = piro(tmp.path(), &["c-compare", "--config", "c.json", "--run-id", "cc"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let run = tmp.path().join("runs/cc");
    for sub in ["theoretical", "adaptive"] {
        assert_eq!(fs::read_to_string(run.join(sub).join("metrics.csv")).unwrap().lines().count(), 6);
    }
    assert!(json(&run.join("report.json"))["theoretical_c"].as_f64().unwrap() > 1e5);
}
