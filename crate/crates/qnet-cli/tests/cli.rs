//! End-to-end runs of the `qnet` binary.

use std::process::{Command, Output};

fn qnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qnet")).args(args).output().expect("qnet binary runs")
}

fn csv(out: &Output) -> (Vec<String>, Vec<Vec<String>>) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn elem_steady_example() {
    let (h, rows) = csv(&qnet(&["elem", "steady", "--p", "0.5", "--mstar", "2", "--cutoff", "2", "--f", "ones"]));
    assert_eq!(rows.len(), 1);
    let v: f64 = rows[0][column(&h, "ftilde")].parse().unwrap();
    assert!((v - 0.75).abs() < 1e-12);
}

#[test]
fn twolink_waiting_matches_closed_form() {
    let (h, rows) = csv(&qnet(&[
        "twolink", "waiting", "--symmetric", "--p", "0.5", "--q", "0.5", "--tstar", "5", "--compare-analytic",
    ]));
    let (a, b) = (column(&h, "lp_waiting"), column(&h, "analytic"));
    for r in rows {
        let (x, y): (f64, f64) = (r[a].parse().unwrap(), r[b].parse().unwrap());
        assert!((x - y).abs() <= 1e-6, "{x} vs {y}");
    }
}

#[test]
fn satlink_sweep_grid_shape_and_thread_independence() {
    let args = ["satlink", "sweep", "--d", "0:5000:100", "--h", "500,1000", "--coh-s", "1"];
    let one = Command::new(env!("CARGO_BIN_EXE_qnet")).args(args).env("QNET_THREADS", "1").output().unwrap();
    let four = Command::new(env!("CARGO_BIN_EXE_qnet")).args(args).env("QNET_THREADS", "4").output().unwrap();
    assert_eq!(one.stdout, four.stdout);
    let (h, rows) = csv(&one);
    assert_eq!(rows.len(), 2 * 51 * 100);
    for name in ["ftilde", "x", "fidelity"] {
        column(&h, name);
    }
}

#[test]
fn invalid_input_exits_2_with_diagnostic() {
    let out = qnet(&["elem", "steady", "--p", "1.5", "--mstar", "2", "--f", "ones"]);
    assert_eq!(out.status.code(), Some(2));
    let diag: serde_json::Value = serde_json::from_slice(&out.stderr).expect("JSON diagnostic");
    assert_eq!(diag["exit_code"], 2);
}

#[test]
fn unknown_scenario_key_exits_2() {
    let dir = std::env::temp_dir().join(format!("qnet-cli-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad.json");
    std::fs::write(&path, r#"{"kind":"elem","command":"steady","params":{"p":0.5,"mstar":2,"bogus":1}}"#).unwrap();
    let out = qnet(&["--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn scenario_file_with_flag_override() {
    let dir = std::env::temp_dir().join(format!("qnet-cli-scn-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("s.json");
    std::fs::write(&path, r#"{"kind":"elem","command":"steady","params":{"p":0.9,"mstar":2,"cutoff":"2","f":"ones"}}"#)
        .unwrap();
    let (h, rows) = csv(&qnet(&["--config", path.to_str().unwrap(), "elem", "steady", "--p", "0.5"]));
    let v: f64 = rows[0][column(&h, "ftilde")].parse().unwrap();
    assert!((v - 0.75).abs() < 1e-12);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn json_output_validates() {
    for args in [
        vec!["--format", "json", "elem", "optimal", "--p", "0.3", "--mstar", "3", "--f", "exp:0.1"],
        vec!["--format", "json", "waiting", "collective", "--m", "1:4:1", "--p", "0.5"],
        vec!["--format", "json", "satlink", "keyrates", "--d", "1000", "--h", "500", "--protocol", "di"],
    ] {
        let out = qnet(&args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        qnet_cli::output::validate_result(&v).unwrap_or_else(|e| panic!("{args:?}: {e}"));
    }
}

#[test]
fn selftest_passes() {
    let out = qnet(&["--selftest"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}
