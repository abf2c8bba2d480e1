//! Command-line contract: exit codes, messages and output layout.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn kipa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kipa")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(kipa(&["--help"]).status.code(), Some(0));
    let v = kipa(&["--version"]);
    assert_eq!(v.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&v.stdout).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn unknown_flag_exits_one() {
    let o = kipa(&["s11", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_circuit_names_the_path() {
    let o = kipa(&["s11", "--circuit", "/nonexistent/dev.json", "--sweep", data("s11_power_ladder.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/nonexistent/dev.json"), "{}", stderr(&o));
}

#[test]
fn validate_reports_ok_and_violations() {
    let o = kipa(&["validate", "--circuit", data("kipa.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("ok"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    // A floating node and a non-positive capacitance.
    std::fs::write(
        &bad,
        r#"{"ground": "0", "nodes": ["a", "b", "c"],
            "elements": [
              {"type": "capacitor", "name": "C1", "nodes": ["a", "b"], "capacitance_f": -1e-15},
              {"type": "resistor", "name": "R1", "nodes": ["b", "0"], "resistance_ohm": 50}
            ],
            "ports": [{"name": "P1", "node": "a", "z0_ohm": 50}]}"#,
    )
    .unwrap();
    let o = kipa(&["validate", "--circuit", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("violation"), "{}", stderr(&o));
}

#[test]
fn sweep_with_wrong_analysis_is_rejected() {
    let o = kipa(&["gain", "--circuit", data("kipa.json").to_str().unwrap(), "--sweep", data("s11_power_ladder.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn csv_header_and_side_tables() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = dir.path().join("sweep.json");
    std::fs::write(
        &sweep,
        r#"{"analysis": "gain",
            "axes": [{"param": "f_s_hz", "start": 7.3666e9, "stop": 7.3766e9, "points": 5}],
            "fixed": {"f_c_hz": 7.3716e9, "delta_f_hz": 133.5e6, "pump_power_dbm": -89.0}}"#,
    )
    .unwrap();
    let out = dir.path().join("g.csv");
    let o = kipa(&[
        "gain",
        "--circuit",
        data("kipa.json").to_str().unwrap(),
        "--sweep",
        sweep.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("f_s_hz,gain_db,idler_gain_db,converged,iters"));
    assert_eq!(lines.count(), 5);
    let peaks = std::fs::read_to_string(dir.path().join("g.peaks.csv")).unwrap();
    assert!(peaks.starts_with("peak_gain_db,peak_f_hz,bandwidth_3db_hz\n"));
    assert!(stderr(&o).contains("peak_gain_db = "));
}

#[test]
fn calibrate_writes_a_loadable_circuit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("dev.json");
    let o = kipa(&["calibrate", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("critical_power_dbm = "));
    let v = kipa(&["validate", "--circuit", out.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(0), "{}", stderr(&v));
}
