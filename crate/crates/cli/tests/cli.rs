use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn shearflame(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shearflame")).args(args).arg("--out").arg(out).output().unwrap()
}

fn stderr_json(output: &Output) -> Value {
    serde_json::from_slice(&output.stderr).expect("stderr carries a JSON error")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn bad_flag_value_names_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let output = shearflame(&["effective", "--d", "-1"], tmp.path());
    assert_eq!(output.status.code(), Some(2));
    let err = stderr_json(&output);
    assert_eq!(err["error"], "config");
    assert_eq!(err["key"], "d");
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "grid_N = 16\nbogus = 3\n").unwrap();
    let output = shearflame(&["effective", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(output.status.code(), Some(2));
    assert_eq!(stderr_json(&output)["key"], "bogus");
}

#[test]
fn horizontal_direction_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let output = shearflame(&["effective", "--P", "1,0,0"], tmp.path());
    assert_eq!(output.status.code(), Some(2));
    assert_eq!(stderr_json(&output)["key"], "P");
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "grid_N = 64\nA = 0.9\nd = 0.2\n").unwrap();
    let out = tmp.path().join("out");
    let output = shearflame(
        &["effective", "--config", cfg.to_str().unwrap(), "--grid-n", "16", "--cutoff", "off"],
        &out,
    );
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let est = read_json(&out.join("effective_no-cutoff.json"));
    assert_eq!(est["grid_N"], 16);
    assert_eq!(est["A"], 0.9);
    assert_eq!(est["cutoff"], false);
    assert!(!out.join("effective_cutoff.json").exists());
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["solves"].as_array().unwrap().len(), 4);
}

#[test]
fn cell_solve_writes_a_resumable_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let output = shearflame(&["cell-solve", "--grid-n", "16", "--A", "0.3", "--cutoff", "on"], &out);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let (v, meta) = shearflame::solvers::read_checkpoint(&out.join("v_cutoff.csv")).unwrap();
    assert!(meta.converged);
    assert_eq!(v.grid().cells(), 16);
    assert_eq!(meta.params.intensity, 0.3);
}

#[test]
fn sweep_csv_has_both_variants() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let output = shearflame(&["sweep", "--grid-n", "16", "--A-range", "0.2:0.6:2", "--cutoff", "both"], &out);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "A,H_bar,H_bar_plus,A_F,homogenized,uniformity");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][0].parse::<f64>().unwrap(), 0.0);
    for row in &rows {
        let plain: f64 = row[1].parse().unwrap();
        let cut: f64 = row[2].parse().unwrap();
        // both variants agree below A1
        assert!((plain - cut).abs() < 1e-3, "{row:?}");
    }
}

#[test]
fn evolve_reports_slope_snapshots() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let output = shearflame(&["evolve", "--grid-n", "16", "--A", "0", "--P", "0,0,2"], &out);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let csv = std::fs::read_to_string(out.join("slope_cutoff.csv")).unwrap();
    assert!(csv.lines().count() > 1);
}
