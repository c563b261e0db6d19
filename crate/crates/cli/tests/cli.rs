use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use camo_core::environment::PursuitConfig;

const CONFIG: &str = r#"{
  "rate": { "amplitude": 5.0, "acuity": 0.05, "tolerance": 0.4 },
  "grid": { "extent": 4.0, "cells": 30, "time_cells": 120 },
  "seed": 4
}"#;

struct Workspace {
    _tmp: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        let config = root.join("small.json");
        fs::write(&config, CONFIG).unwrap();
        Workspace { _tmp: tmp, root, config }
    }

    fn out(&self) -> PathBuf {
        self.root.join("out")
    }

    fn artifacts(&self) -> PathBuf {
        self.out().join(PursuitConfig::from_json(CONFIG).unwrap().hash())
    }

    fn camo(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_camo"))
            .arg("--config")
            .arg(&self.config)
            .arg("--out")
            .arg(self.out())
            .args(args)
            .env_remove("CAMO_CONFIG")
            .output()
            .unwrap()
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

/// A workspace with the small config already solved.
fn solved() -> &'static Workspace {
    static CELL: OnceLock<Workspace> = OnceLock::new();
    CELL.get_or_init(|| {
        let ws = Workspace::new();
        let out = ws.camo(&["solve", "--slices", "0,60"]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        ws
    })
}

fn listed(manifest: &Path, key: &str) -> Vec<String> {
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(manifest).unwrap()).unwrap();
    m[key].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect()
}

#[test]
fn solve_manifest_lists_existing_files() {
    let ws = solved();
    let manifest = ws.artifacts().join("manifest_solve.json");
    let outputs = listed(&manifest, "outputs");
    assert!(outputs.iter().any(|p| p.ends_with("value.bin")));
    assert!(outputs.iter().any(|p| p.ends_with("config.json")));
    for p in outputs.iter().chain(&listed(&manifest, "inputs")) {
        assert!(Path::new(p).exists(), "{p}");
    }
}

#[test]
fn trace_before_solve_reports_missing_artifacts() {
    let ws = Workspace::new();
    let out = ws.camo(&["trace", "2.4", "1.3"]);
    assert_eq!(code(&out), 4);
}

#[test]
fn zero_samples_is_a_usage_error_and_writes_nothing() {
    let ws = Workspace::new();
    assert_eq!(code(&ws.camo(&["stats", "--n", "0"])), 2);
    assert_eq!(code(&ws.camo(&["validate", "1.5", "0.7", "--n", "0"])), 2);
    assert!(!ws.out().exists());
}

#[test]
fn bad_config_exits_with_config_code() {
    let ws = Workspace::new();
    fs::write(&ws.config, r#"{"rate": {"amplitude": -1.0, "acuity": 0.05, "tolerance": 0.4}}"#).unwrap();
    assert_eq!(code(&ws.camo(&["solve-stationary"])), 3);
    fs::write(&ws.config, "{ not json").unwrap();
    assert_eq!(code(&ws.camo(&["solve-stationary"])), 3);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let ws = Workspace::new();
    assert_eq!(code(&ws.camo(&["solve", "--bogus"])), 2);
}

#[test]
fn never_visible_start_exits_with_infeasible_code() {
    let ws = solved();
    assert_eq!(code(&ws.camo(&["trace", "3.9", "3.9"])), 5);
}

#[test]
fn trace_writes_a_named_csv() {
    let ws = solved();
    let out = ws.camo(&["trace", "1.5", "0.7"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(ws.artifacts().join("trace_1.5_0.7.csv")).unwrap();
    assert!(csv.starts_with("t,x_P,y_P,x_E,y_E,phase"));
    assert!(csv.lines().count() > 2);
}

#[test]
fn repeated_sampling_commands_are_byte_identical() {
    let ws = solved();
    let dir = ws.artifacts();
    let read = |name: &str| fs::read(dir.join(name)).unwrap();

    assert_eq!(code(&ws.camo(&["stats", "--n", "40", "--seed", "3"])), 0);
    let (a, b) = (read("scatter_n40_s3.csv"), read("stats_n40_s3.json"));
    assert_eq!(code(&ws.camo(&["--threads", "1", "stats", "--n", "40", "--seed", "3"])), 0);
    assert_eq!(read("scatter_n40_s3.csv"), a);
    assert_eq!(read("stats_n40_s3.json"), b);

    assert_eq!(code(&ws.camo(&["validate", "1.5", "0.7", "--n", "200"])), 0);
    let v = read("validate_1.5_0.7_n200_s4.csv");
    assert_eq!(code(&ws.camo(&["validate", "1.5", "0.7", "--n", "200"])), 0);
    assert_eq!(read("validate_1.5_0.7_n200_s4.csv"), v);
    let report: serde_json::Value =
        serde_json::from_slice(&read("validate_1.5_0.7_n200_s4.json")).unwrap();
    assert_eq!(report["n"], 200);
    assert!(report["mean"].as_f64().unwrap() > 0.0);
}

#[test]
fn config_can_come_from_the_environment() {
    let ws = Workspace::new();
    let out = Command::new(env!("CARGO_BIN_EXE_camo"))
        .arg("--out")
        .arg(ws.out())
        .arg("solve-stationary")
        .env("CAMO_CONFIG", &ws.config)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(ws.artifacts().join("stationary_value.bin").exists());
    assert!(ws.artifacts().join("manifest_solve-stationary.json").exists());
}

#[test]
fn missing_config_is_a_usage_error() {
    let ws = Workspace::new();
    let out = Command::new(env!("CARGO_BIN_EXE_camo"))
        .arg("--out")
        .arg(ws.out())
        .arg("solve")
        .env_remove("CAMO_CONFIG")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}
