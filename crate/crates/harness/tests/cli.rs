use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ermrer_harness::output::sha256_hex;
use ermrer_harness::ExperimentConfig;
use serde_json::{json, Value};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn load(name: &str) -> Value {
    serde_json::from_slice(&std::fs::read(configs().join(name)).unwrap()).unwrap()
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_vec_pretty(v).unwrap()).unwrap();
    path
}

fn ermrer(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ermrer"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn rows(path: &Path) -> Vec<HashMap<String, String>> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header = reader.headers().unwrap().clone();
    reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            header.iter().map(String::from).zip(r.iter().map(String::from)).collect()
        })
        .collect()
}

fn f(row: &HashMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap()
}

#[test]
fn gibbs_summary_on_t3() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ermrer(&["gibbs"], &configs().join("t3.json"), tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_slice(&std::fs::read(tmp.path().join("gibbs/summary.json")).unwrap()).unwrap();
    let cell = &summary["cells"][0];
    assert!((cell["log_partition"].as_f64().unwrap() + 0.691007).abs() <= 1e-6);
    assert!((cell["cumulant_1"].as_f64().unwrap() - 0.42479).abs() <= 1e-5);

    let posterior = rows(&tmp.path().join("gibbs").join(cell["file"].as_str().unwrap()));
    let probs: Vec<f64> = posterior.iter().map(|r| f(r, "prob")).collect();
    for (p, e) in probs.iter().zip([0.66524, 0.24473, 0.09003]) {
        assert!((p - e).abs() <= 1e-5);
    }
}

#[test]
fn one_posterior_file_per_lambda() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = load("t3.json");
    c["lambdas"] = json!([0.5, 2.0]);
    let config = write_config(tmp.path(), "c.json", &c);
    assert!(ermrer(&["gibbs"], &config, tmp.path()).status.success());
    let mut csvs: Vec<String> = std::fs::read_dir(tmp.path().join("gibbs"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    csvs.sort();
    assert_eq!(csvs, ["posterior_z0000_l000.csv", "posterior_z0000_l001.csv"]);
}

#[test]
fn lambda_search_on_t3() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(ermrer(&["lambda-search"], &configs().join("t3.json"), tmp.path()).status.success());
    let r = &rows(&tmp.path().join("lambda-search/lambda_search.csv"))[0];
    assert_eq!(r["achieved"], "1");
    assert_eq!(r["status"], "found");
    let lambda = f(r, "lambda");
    assert!(lambda > 0.455 && lambda < 0.72, "{lambda}");
}

#[test]
fn lambda_search_reports_unachievable_levels() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = load("t3.json");
    c["reference"]["masses"] = json!([0.0, 0.5, 0.5]);
    let config = write_config(tmp.path(), "c.json", &c);
    assert!(ermrer(&["lambda-search"], &config, tmp.path()).status.success());
    let r = &rows(&tmp.path().join("lambda-search/lambda_search.csv"))[0];
    assert_eq!(r["status"], "not_achievable");
    assert_eq!(r["achieved"], "0");
    assert_eq!(f(r, "delta_star"), 1.0);
}

#[test]
fn sensitivity_with_uniform_deviation_on_t3() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(ermrer(&["sensitivity"], &configs().join("t3.json"), tmp.path()).status.success());
    let all = rows(&tmp.path().join("sensitivity/sensitivity.csv"));
    let r = all.iter().find(|r| r["deviation"] == "uniform").unwrap();
    assert_eq!(r["holds"], "1");
    assert!((f(r, "bound") - 0.6419).abs() <= 1e-4);
    assert!((f(r, "sensitivity") - 0.57521).abs() <= 1e-5);
    let point = all.iter().find(|r| r["deviation"] == "point_mass:0").unwrap();
    assert!((f(point, "sensitivity") + 0.42479).abs() <= 1e-5);
}

#[test]
fn constrained_min_on_t3() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(ermrer(&["constrained-min"], &configs().join("t3.json"), tmp.path()).status.success());
    let all = rows(&tmp.path().join("constrained-min/constrained_min.csv"));
    let small = all.iter().find(|r| f(r, "c") == 0.1).unwrap();
    assert_eq!(small["saturated"], "0");
    assert!((f(small, "kl") - 0.1).abs() <= 1e-8);
    let huge = all.iter().find(|r| f(r, "c") == 1e6).unwrap();
    assert_eq!(huge["saturated"], "1");
    assert_eq!(f(huge, "expected_risk"), 0.0);
}

#[test]
fn lautum_on_laut2() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(ermrer(&["lautum"], &configs().join("laut2.json"), tmp.path()).status.success());
    let r = &rows(&tmp.path().join("lautum/lautum.csv"))[0];
    assert!((f(r, "lautum") - 0.0292).abs() <= 1e-4);
    assert_eq!(r["mode"], "exact");
    assert_eq!(r["holds"], "1");
}

#[test]
fn monte_carlo_lautum_needs_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = load("laut2.json");
    c["monte_carlo_samples"] = json!(1000);
    let config = write_config(tmp.path(), "c.json", &c);
    let out = ermrer(&["lautum"], &config, tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));

    let out = ermrer(&["lautum", "--seed", "5"], &config, tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = &rows(&tmp.path().join("lautum/lautum.csv"))[0];
    assert_eq!(r["mode"], "monte_carlo");
    assert_eq!(r["seed"], "5");
    let manifest: Value = serde_json::from_slice(&std::fs::read(tmp.path().join("lautum/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
}

#[test]
fn seed_override_changes_stochastic_output() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = load("laut2.json");
    c["monte_carlo_samples"] = json!(500);
    c["seed"] = json!(1);
    let config = write_config(tmp.path(), "c.json", &c);
    let read = |seed: &str| {
        let out = tmp.path().join(seed);
        assert!(ermrer(&["lautum", "--seed", seed], &config, &out).status.success());
        std::fs::read(out.join("lautum/lautum.csv")).unwrap()
    };
    assert_ne!(read("1"), read("2"));
}

#[test]
fn unknown_keys_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = load("t3.json");
    c["lambdaz"] = json!([1.0]);
    let config = write_config(tmp.path(), "c.json", &c);
    let out = ermrer(&["gibbs"], &config, tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambdaz"));
}

#[test]
fn invalid_values_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = load("t3.json");
    c["lambdas"] = json!([1.0, -2.0]);
    let config = write_config(tmp.path(), "c.json", &c);
    let out = ermrer(&["gibbs"], &config, tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambdas"));

    let missing = tmp.path().join("absent.json");
    assert_ne!(ermrer(&["gibbs"], &missing, tmp.path()).status.code(), Some(0));
}

#[test]
fn verify_passes_on_the_default_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = load("verify.json");
    c["verify"] = json!({ "instances": 30 });
    let config = write_config(tmp.path(), "c.json", &c);
    let out = ermrer(&["verify"], &config, tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let all = rows(&tmp.path().join("verify/verify.csv"));
    assert_eq!(all.len(), ermrer_harness::verify::CHECKS.len());
    assert!(all.iter().all(|r| r["passed"] == "1" && r["failures"] == "0"));
}

#[test]
fn verify_negative_control_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = load("verify.json");
    c["verify"] = json!({ "checks": ["sensitivity_bound"], "instances": 20, "force_b_squared": 0.0 });
    let config = write_config(tmp.path(), "c.json", &c);
    let out = ermrer(&["verify"], &config, tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let r = &rows(&tmp.path().join("verify/verify.csv"))[0];
    assert_eq!(r["check"], "sensitivity_bound");
    assert_eq!(r["passed"], "0");
}

#[test]
fn verify_with_no_checks_warns_and_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = load("verify.json");
    c["verify"] = json!({ "checks": [] });
    let config = write_config(tmp.path(), "c.json", &c);
    let out = ermrer(&["verify"], &config, tmp.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn unknown_check_names_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = load("verify.json");
    c["verify"] = json!({ "checks": ["no_such_check"] });
    let config = write_config(tmp.path(), "c.json", &c);
    assert_eq!(ermrer(&["verify"], &config, tmp.path()).status.code(), Some(2));
}

#[test]
fn shipped_configs_round_trip() {
    for name in ["t3.json", "laut2.json", "verify.json"] {
        let text = std::fs::read_to_string(configs().join(name)).unwrap();
        let config = ExperimentConfig::from_json(&text).unwrap();
        let again = ExperimentConfig::from_json(&config.to_json()).unwrap();
        assert_eq!(config, again, "{name}");
    }
}

#[test]
fn manifest_is_written_last_and_hashes_every_file() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(ermrer(&["gibbs"], &configs().join("t3.json"), tmp.path()).status.success());
    let dir = tmp.path().join("gibbs");
    let manifest: Value = serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "gibbs");
    let config_bytes = std::fs::read(configs().join("t3.json")).unwrap();
    assert_eq!(manifest["config_sha256"], sha256_hex(&config_bytes));
    let files = manifest["files"].as_array().unwrap();
    let on_disk = std::fs::read_dir(&dir).unwrap().count();
    assert_eq!(files.len() + 1, on_disk);
    for entry in files {
        let bytes = std::fs::read(dir.join(entry["name"].as_str().unwrap())).unwrap();
        assert_eq!(entry["sha256"], sha256_hex(&bytes));
    }
}

#[test]
fn csv_and_inline_datasets_agree() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("data.csv"), "x_0,y\n1.0,2.0\n-1.0,0.5\n0.5,1.0\n").unwrap();
    let base = json!({
        "version": 1,
        "problem": { "kind": "linear-squared" },
        "reference": { "kind": "density", "density": "gaussian(0,1)", "lower": [-3.0], "upper": [3.0], "cells": [60] },
        "lambdas": [0.1, 1.0]
    });
    let mut from_csv = base.clone();
    from_csv["dataset"] = json!({ "csv": "data.csv" });
    let mut inline = base;
    inline["dataset"] = json!({ "inline": [
        { "x": [1.0], "y": 2.0 }, { "x": [-1.0], "y": 0.5 }, { "x": [0.5], "y": 1.0 }
    ] });
    let a = write_config(tmp.path(), "a.json", &from_csv);
    let b = write_config(tmp.path(), "b.json", &inline);
    assert!(ermrer(&["gibbs"], &a, &tmp.path().join("a")).status.success());
    assert!(ermrer(&["gibbs"], &b, &tmp.path().join("b")).status.success());
    for file in ["posterior_z0000_l000.csv", "posterior_z0000_l001.csv", "summary.json"] {
        let x = std::fs::read(tmp.path().join("a/gibbs").join(file)).unwrap();
        let y = std::fs::read(tmp.path().join("b/gibbs").join(file)).unwrap();
        assert_eq!(x, y, "{file}");
    }
}

#[test]
fn zero_jobs_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ermrer(&["gibbs", "--jobs", "0"], &configs().join("t3.json"), tmp.path());
    assert_eq!(out.status.code(), Some(2));
}
