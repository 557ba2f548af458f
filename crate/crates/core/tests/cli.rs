use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kincal::harness::ExperimentConfig;
use serde_json::Value;

fn kincal(args: &[&str], env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_kincal"));
    cmd.args(args).env_remove("KINCAL_SEED");
    if let Some(s) = env_seed {
        cmd.env("KINCAL_SEED", s);
    }
    cmd.output().expect("binary runs")
}

fn small_config(dir: &Path) -> PathBuf {
    let mut cfg = ExperimentConfig::shipped_default();
    cfg.iterations = 5;
    cfg.candidates = 60;
    let path = dir.join("small.json");
    fs::write(&path, cfg.to_json()).unwrap();
    path
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_history_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("out");
    let o = kincal(&["run", "--config", s(&cfg), "--mode", "bo", "--out", s(&out)], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let history = fs::read_to_string(out.join("history_bo.csv")).unwrap();
    let rows: Vec<&str> = history.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows[0].starts_with("iter,mode,f,f_p_m,f_q_rad,qw,qx,qy,qz,px,py,pz,theta_1,"));
    assert!(rows[0].ends_with("theta_7,ucb_value,gp_mean,gp_var"));
    assert!(!out.join("history_random.csv").exists());
    let summary = json(&out.join("summary_bo.json"));
    assert_eq!(summary["iterations"], 5);
    assert_eq!(summary["identifiable_mask"].as_array().unwrap().len(), 28);
}

#[test]
fn seed_precedence_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let seed_of = |name: &str, env: Option<&str>, flag: Option<&str>| {
        let out = dir.path().join(name);
        let mut args = vec!["run", "--config", s(&cfg), "--mode", "random", "--out", s(&out)];
        if let Some(f) = flag {
            args.extend(["--seed", f]);
        }
        assert!(kincal(&args, env).status.success());
        json(&out.join("summary_random.json"))["config_echo"]["seed"].as_u64().unwrap()
    };
    assert_eq!(seed_of("a", None, None), 7);
    assert_eq!(seed_of("b", Some("21"), None), 21);
    assert_eq!(seed_of("c", Some("21"), Some("33")), 33);
}

#[test]
fn kernel_check_reports_pass() {
    let dir = tempfile::tempdir().unwrap();
    let o = kincal(&["kernel-check", "--out", s(dir.path())], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&dir.path().join("kernel_check.json"));
    assert_eq!(report["pass"], true);
    let first = &report["reference_eigenvalues"][0];
    assert_eq!(first["beta"], 12.0);
    assert!(first["eigenvalues"][0].as_f64().unwrap() < 0.0);
}

#[test]
fn offline_calibration_from_recorded_measurements() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::shipped_default();
    cfg.iterations = 8;
    cfg.candidates = 60;
    cfg.noise.pos = 0.0;
    cfg.noise.rot = 0.0;
    let cfg_path = dir.path().join("exact.json");
    fs::write(&cfg_path, cfg.to_json()).unwrap();
    let run_out = dir.path().join("run");
    assert!(kincal(&["run", "--config", s(&cfg_path), "--mode", "random", "--out", s(&run_out)], None)
        .status
        .success());

    let cal_out = dir.path().join("cal");
    let data = run_out.join("measurements_random.csv");
    let o = kincal(&["calibrate", "--config", s(&cfg_path), "--data", s(&data), "--out", s(&cal_out)], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&cal_out.join("calibration.json"));
    assert_eq!(report["measurements"], 8);
    assert_eq!(report["converged"], true);
    let recovered = report["recovered_delta"].as_array().unwrap();
    let injected = report["injected_delta"].as_array().unwrap();
    for (r, i) in recovered.iter().zip(injected) {
        assert!((r.as_f64().unwrap() - i.as_f64().unwrap()).abs() < 1e-6);
    }
}

#[test]
fn invalid_config_fails_with_field_name() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::shipped_default();
    cfg.weights.alpha = [0.5, 0.4];
    let path = dir.path().join("bad.json");
    fs::write(&path, cfg.to_json()).unwrap();
    let o = kincal(&["run", "--config", s(&path), "--out", s(dir.path())], None);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("weights.alpha"));

    let o = kincal(&["run", "--config", s(&dir.path().join("missing.json")), "--out", s(dir.path())], None);
    assert!(!o.status.success());

    let o = kincal(&["run", "--out", s(dir.path())], Some("not-a-number"));
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("KINCAL_SEED"));
}
