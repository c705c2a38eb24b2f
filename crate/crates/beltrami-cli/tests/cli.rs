//! End-to-end checks of the `beltrami` binary: artifacts land where the
//! scenario asks, reruns are byte-identical, and exit codes track the
//! invariant battery.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run(scenario: &Path, out: &Path, cmd: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beltrami"))
        .arg("--scenario")
        .arg(scenario)
        .arg("--out")
        .arg(out)
        .arg(cmd)
        .output()
        .expect("binary should launch")
}

fn run_ok(scenario: &Path, out: &Path, cmd: &str) {
    let output = run(scenario, out, cmd);
    assert!(
        output.status.success(),
        "`{cmd}` failed:\n{}",
        String::from_utf8_lossy(&output.stderr)
    );
}

const ZERO: &str = r#"{ "field": { "kind": "zero" }, "grid": { "L": 1.0, "m": 3 } }"#;

#[test]
fn discretize_strips_alternates_by_column() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(
        dir.path(),
        "strips.json",
        r#"{
            "field": { "kind": "vertical-strips", "kappa": 0.5 },
            "grid": { "L": 2.0, "m": 4 },
            "averaging": "identity"
        }"#,
    );
    let out = dir.path().join("out");
    run_ok(&sc, &out, "discretize");

    let file: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("field.json")).unwrap()).unwrap();
    let values = file["values"].as_array().unwrap();
    assert_eq!(values.len(), 16);
    for (k, v) in values.iter().enumerate() {
        let expected = if k % 4 == 1 || k % 4 == 3 { 0.5 } else { 0.0 };
        assert_eq!(v[0].as_f64().unwrap(), expected, "cell {k}");
        assert_eq!(v[1].as_f64().unwrap(), 0.0);
    }
}

#[test]
fn solve_zero_field_places_poles_on_the_lattice() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(
        dir.path(),
        "zero.json",
        r#"{ "field": { "kind": "zero" }, "grid": { "L": 1.0, "m": 3 }, "outputs": ["poles"] }"#,
    );
    let out = dir.path().join("out");
    run_ok(&sc, &out, "solve");

    let mut reader = csv::Reader::from_path(out.join("poles.csv")).unwrap();
    let mut count = 0;
    let pitch = 2.0 / 3.0;
    for record in reader.records() {
        let record = record.unwrap();
        let i: f64 = record[1].parse().unwrap();
        let j: f64 = record[2].parse().unwrap();
        let x: f64 = record[3].parse().unwrap();
        let y: f64 = record[4].parse().unwrap();
        // The solved poles sit on the lattice corners; the normalization
        // gauge may stir the last bit, nothing more.
        assert!((x - (-1.0 + pitch * i)).abs() < 1e-14, "x = {x} at i = {i}");
        assert!((y - (-1.0 + pitch * j)).abs() < 1e-14, "y = {y} at j = {j}");
        count += 1;
    }
    assert_eq!(count, 16);

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let stages: Vec<&str> = report["stages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["stage"].as_str().unwrap())
        .collect();
    assert_eq!(stages, ["discretize", "solve", "normalize"]);
}

#[test]
fn verify_exits_zero_and_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path(), "zero.json", ZERO);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_ok(&sc, &a, "verify");
    run_ok(&sc, &b, "verify");
    let left = fs::read(a.join("verify.csv")).unwrap();
    assert_eq!(left, fs::read(b.join("verify.csv")).unwrap());
    // The zero field has no smooth bump center worth expanding around, yet
    // its tables are still defined; all rows must pass or be skipped.
    let text = String::from_utf8(left).unwrap();
    assert!(text.lines().skip(1).all(|l| !l.contains(",fail,")), "{text}");
}

#[test]
fn render_draws_the_triangle_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(
        dir.path(),
        "tri.json",
        r#"{ "field": { "kind": "triangle-fixture" }, "grid": { "L": 1.0, "m": 1 } }"#,
    );
    let out = dir.path().join("out");
    run_ok(&sc, &out, "render");
    let svg = fs::read_to_string(out.join("render.svg")).unwrap();
    assert_eq!(svg.matches("<path").count(), 2);
    assert_eq!(svg.matches("<circle").count(), 3);
    assert!(svg.starts_with("<?xml"));
}

#[test]
fn eval_round_trips_within_budget() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path(), "zero.json", ZERO);
    let out = dir.path().join("out");
    run_ok(&sc, &out, "eval");
    let mut reader = csv::Reader::from_path(out.join("probes.csv")).unwrap();
    let mut count = 0;
    for record in reader.records() {
        let defect: f64 = record.unwrap()[5].parse().unwrap();
        assert!(defect < 1e-8);
        count += 1;
    }
    assert_eq!(count, 20);
}

#[test]
fn malformed_scenarios_fail_with_context() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");

    let unknown_key = scenario(
        dir.path(),
        "bad-key.json",
        r#"{ "field": { "kind": "zero" }, "grid": { "L": 1.0, "m": 3 }, "mesh": 4 }"#,
    );
    let output = run(&unknown_key, &out, "solve");
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("mesh"));

    let bad_grid = scenario(
        dir.path(),
        "bad-grid.json",
        r#"{ "field": { "kind": "zero" }, "grid": { "L": -1.0, "m": 3 } }"#,
    );
    assert!(!run(&bad_grid, &out, "solve").status.success());

    // The triangle fixture has no planar grid to probe.
    let tri = scenario(
        dir.path(),
        "tri.json",
        r#"{ "field": { "kind": "triangle-fixture" }, "grid": { "L": 1.0, "m": 1 } }"#,
    );
    assert!(!run(&tri, &out, "eval").status.success());
}
