use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::sync::OnceLock;

use comfort_core::hrv::FeatureMatrix;

fn comfortd(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_comfortd"))
        .args(args)
        .current_dir(cwd)
        .env("COMFORTD_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = comfortd(args, cwd);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Four-subject cohort and its feature matrix, built once.
fn workspace() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        ok(&["synth", "--subjects", "4", "--seed", "7", "--out", "cohort"], dir.path());
        ok(&["extract", "--in", "cohort", "--out", "features.csv"], dir.path());
        dir
    })
    .path()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        ok(&["synth", "--subjects", "12", "--seed", "7", "--out", out], dir.path());
    }
    let a = read_dir_sorted(&dir.path().join("a"));
    let b = read_dir_sorted(&dir.path().join("b"));
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["annotations.csv", "ibi.csv", "manifest.json", "profiles.json"]);
    for ((name, x), (_, y)) in a.iter().zip(&b) {
        if name == "manifest.json" {
            // identical apart from the --out they record
            let mut x: serde_json::Value = serde_json::from_slice(x).unwrap();
            let mut y: serde_json::Value = serde_json::from_slice(y).unwrap();
            x["parameters"]["out"] = serde_json::Value::Null;
            y["parameters"]["out"] = serde_json::Value::Null;
            assert_eq!(x, y);
        } else {
            assert!(x == y, "{name} differs");
        }
    }
}

#[test]
fn sweep_writes_a_five_row_curve() {
    let dir = workspace();
    ok(
        &[
            "calib-sweep", "--in", "features.csv", "--out", "sweep", "--q", "1", "--k", "0,100,200,300,400",
            "--repeats", "1", "--estimators", "10",
        ],
        dir,
    );
    let curve = fs::read_to_string(dir.join("sweep/curve_accuracy.csv")).unwrap();
    let lines: Vec<&str> = curve.lines().collect();
    assert_eq!(lines[0], "k,metric_mean,metric_std");
    assert_eq!(lines.len(), 6);
    let ks: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ks, ["0", "100", "200", "300", "400"]);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("sweep/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "calib-sweep");
    assert_eq!(manifest["parameters"]["k"], serde_json::json!([0, 100, 200, 300, 400]));
}

#[test]
fn identical_runs_write_identical_results() {
    let dir = workspace();
    for out in ["loso_a", "loso_b"] {
        ok(&["eval-loso", "--in", "features.csv", "--out", out, "--estimators", "10", "--task", "regress"], dir);
    }
    // manifests differ only by the --out they record
    let strip = |files: Vec<(String, Vec<u8>)>| -> Vec<(String, Vec<u8>)> {
        files.into_iter().filter(|(n, _)| n != "manifest.json").collect()
    };
    assert_eq!(strip(read_dir_sorted(&dir.join("loso_a"))), strip(read_dir_sorted(&dir.join("loso_b"))));
    for model in ["m1.tcm", "m2.tcm"] {
        ok(&["train", "--in", "features.csv", "--out", model, "--model", "rf", "--estimators", "5"], dir);
    }
    assert_eq!(fs::read(dir.join("m1.tcm")).unwrap(), fs::read(dir.join("m2.tcm")).unwrap());
    assert!(dir.join("m1.tcm.manifest.json").exists());
}

#[test]
fn person_specific_and_importance_commands_run() {
    let dir = workspace();
    let out = ok(&["eval-person", "--in", "features.csv", "--out", "person", "--folds", "3", "--estimators", "5"], dir);
    assert!(String::from_utf8_lossy(&out.stdout).contains("accuracy"));
    let out = ok(&["importance", "--in", "features.csv", "--out", "imp", "--estimators", "5", "--drop", "5"], dir);
    assert!(String::from_utf8_lossy(&out.stdout).contains("subject_id: importance rank"));
    let imp = fs::read_to_string(dir.join("imp/importance.csv")).unwrap();
    assert_eq!(imp.lines().count(), 28);
    let rfe = fs::read_to_string(dir.join("imp/rfe.csv")).unwrap();
    assert_eq!(rfe.lines().count(), 28);
}

#[test]
fn one_subject_matrix_fails_loso_with_exit_1() {
    let dir = workspace();
    let text = fs::read(dir.join("features.csv")).unwrap();
    let m = FeatureMatrix::read_csv(text.as_slice()).unwrap().subject("S01");
    let mut buf = Vec::new();
    m.write_csv(&mut buf).unwrap();
    fs::write(dir.join("one.csv"), buf).unwrap();
    let out = comfortd(&["eval-loso", "--in", "one.csv", "--out", "one"], dir);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("need ≥ 2 subjects"));
}

#[test]
fn usage_errors_exit_2_and_runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = comfortd(&["eval-loso", "--bogus"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(comfortd(&["train", "--in", "x.csv", "--out", "m.tcm", "--model", "svm"], dir.path()).status.code(), Some(2));
    assert_eq!(comfortd(&["frobnicate"], dir.path()).status.code(), Some(2));
    let out = comfortd(&["train", "--in", "missing.csv", "--out", "m.tcm"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
    assert_eq!(comfortd(&["serve", "--config", "missing.toml"], dir.path()).status.code(), Some(1));
}
