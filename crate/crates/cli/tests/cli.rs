use std::path::{Path, PathBuf};
use std::process::Command;

fn plm() -> Command {
    Command::new(env!("CARGO_BIN_EXE_plm"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn passing_run_exits_zero() {
    let out = tempfile::tempdir().unwrap();
    let s = plm()
        .args(["exponents", "--config"])
        .arg(config("exponents.json"))
        .arg("--out")
        .arg(out.path())
        .args(["--workers", "1"])
        .status()
        .unwrap();
    assert_eq!(s.code(), Some(0));
    assert!(out.path().join("exponents.csv").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["passed"], true);
}

#[test]
fn failing_verdict_exits_two() {
    let out = tempfile::tempdir().unwrap();
    let s = plm()
        .args(["stability", "--config"])
        .arg(config("stability_inflated.json"))
        .arg("--out")
        .arg(out.path())
        .status()
        .unwrap();
    assert_eq!(s.code(), Some(2));
    assert!(out.path().join("stability.csv").exists());
}

#[test]
fn runtime_error_exits_one() {
    let out = tempfile::tempdir().unwrap();
    let s = plm()
        .args(["solve", "--config"])
        .arg(out.path().join("missing.json"))
        .arg("--out")
        .arg(out.path())
        .status()
        .unwrap();
    assert_eq!(s.code(), Some(1));
}

#[test]
fn single_pair_prints_json() {
    let o = plm().args(["exponents", "--p", "2", "--N", "3"]).output().unwrap();
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["pc"].as_f64().unwrap() - 5.0 / 3.0).abs() < 1e-12);
    assert_eq!(v["N"], 3);
    let bad = plm().args(["exponents", "--p", "0.5", "--N", "3"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
}
