use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn outreach(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_outreach")).args(args).output().unwrap()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("run.toml");
    fs::write(
        &path,
        "[synthetic]\nproperties = 300\n\n[model.hyperparams]\nn_estimators = 15\n\n[significance]\nbootstrap_iterations = 200\n",
    )
    .unwrap();
    path.display().to_string()
}

#[test]
fn help_exits_zero() {
    let out = outreach(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for verb in ["gen", "train-score", "compare", "risk-histogram", "metrics"] {
        assert!(text.contains(verb), "{verb}");
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(outreach(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(outreach(&["gen", "--properties", "many"]).status.code(), Some(1));
}

#[test]
fn zero_properties_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = outreach(&["gen", "--properties", "0", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out_dir.exists());
}

#[test]
fn unknown_config_key_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "sede = 4\n").unwrap();
    let out = outreach(&["gen", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sede"));
}

#[test]
fn missing_inputs_are_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = outreach(&["metrics", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn full_run_writes_every_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out_dir = dir.path().join("out");
    let o = out_dir.to_str().unwrap();
    for verb in ["gen", "train-score", "compare", "risk-histogram", "metrics"] {
        let out = outreach(&[verb, "--config", &cfg, "--seed", "3", "--out", o]);
        assert!(out.status.success(), "{verb}: {}", String::from_utf8_lossy(&out.stderr));
    }
    for f in [
        "config.toml",
        "data/properties.csv",
        "data/ground_truth.json",
        "models/ENO.json",
        "scores/E.csv",
        "metrics.json",
        "curves/EN_roc.csv",
        "comparison.json",
        "comparison.txt",
        "routes/neo_t_o_time.geojson",
        "routes/neighborhood_canvass_units.csv",
        "overlays/neo_t_o_vs_prior_eviction_count_time.geojson",
        "risk_histogram.csv",
    ] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let echoed = fs::read_to_string(out_dir.join("config.toml")).unwrap();
    assert!(echoed.contains("seed = 3"));
    let hist = fs::read_to_string(out_dir.join("risk_histogram.csv")).unwrap();
    assert_eq!(hist.lines().count(), 7);
}

#[test]
fn imported_scores_replace_training() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        assert!(outreach(&["gen", "--config", &cfg, "--out", d.to_str().unwrap()]).status.success());
    }
    assert!(outreach(&["train-score", "--config", &cfg, "--out", a.to_str().unwrap()]).status.success());
    let imported = a.join("scores/E.csv");
    let arg = format!("E={}", imported.display());
    let out = outreach(&["train-score", "--config", &cfg, "--out", b.to_str().unwrap(), "--import-scores", &arg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("E: imported"));
    assert_eq!(fs::read(imported).unwrap(), fs::read(b.join("scores/E.csv")).unwrap());
    assert!(!b.join("models/E.json").exists());
}
