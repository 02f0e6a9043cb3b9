use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn qtopos(scenario: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qtopos"))
        .arg("--scenario")
        .arg(scenario)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("spawn qtopos")
}

fn report(out: &Path, suite: &str) -> serde_json::Value {
    let body = std::fs::read_to_string(out.join(format!("{suite}.json"))).unwrap();
    serde_json::from_str(&body).unwrap()
}

#[test]
fn ks_on_cabello_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = qtopos(&fixture("cabello18.json"), dir.path(), &["ks"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(dir.path(), "ks");
    assert_eq!(r["schema"], "report_v1");
    assert_eq!(r["cases"][0]["details"]["global_sections"], 0);
}

#[test]
fn covariance_on_qutrit_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = qtopos(&fixture("qutrit-rotations.json"), dir.path(), &["covariance"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).lines().all(|l| !l.starts_with("FAIL")));
}

#[test]
fn export_dot_writes_graphs() {
    let dir = tempfile::tempdir().unwrap();
    let o = qtopos(&fixture("qubit-hadamard.json"), dir.path(), &["--format", "dot", "export"]);
    assert!(o.status.success());
    for name in ["poset.dot", "lambda.dot"] {
        let body = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(body.starts_with("digraph"), "{name}: {body}");
    }
}

#[test]
fn truth_table_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o =
        qtopos(&fixture("qubit-hadamard.json"), dir.path(), &["--format", "csv", "truth-value", "mixed", "--r", "1/2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("truth_table.csv")).unwrap();
    assert!(csv.lines().count() > 1);
}

#[test]
fn malformed_scenario_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"name\": \"x\", \"dim\": ").unwrap();
    let o = qtopos(&bad, dir.path(), &["build-poset"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));
}

#[test]
fn grid_off_values_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = qtopos(&fixture("qubit-hadamard.json"), dir.path(), &["truth-value", "mixed", "--r", "1/3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reports_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let o = qtopos(&fixture("qubit-hadamard.json"), dir.path(), &["adjunction", "--samples", "10"]);
        assert!(o.status.success());
    }
    let strip = |mut v: serde_json::Value| {
        v.as_object_mut().unwrap().remove("timing");
        v
    };
    assert_eq!(strip(report(a.path(), "adjunction")), strip(report(b.path(), "adjunction")));
}
