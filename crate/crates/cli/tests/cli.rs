//! End-to-end tests of the `hjnet` binary: exit codes, stdout contracts and
//! file outputs.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hjnet(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hjnet"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, content: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, content).unwrap();
    path.to_string_lossy().into_owned()
}

const TEST1_RUN: &str = r#"{
  "problem": "test1",
  "dx": 0.05,
  "dt_rule": "cfl:4",
  "T": 1.0
}"#;

#[test]
fn validate_passes_on_test1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", TEST1_RUN);
    let out = hjnet(&["validate", &cfg], dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.contains("margin=5.000000 ok"));
    assert!(stdout.contains("all checks passed"));
}

#[test]
fn validate_warns_but_passes_on_cfl_violation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"problem": "test1", "dx": 0.05, "dt_rule": "half", "T": 1.0}"#,
    );
    let out = hjnet(&["validate", &cfg], dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.contains("WARNING"));
}

#[test]
fn validate_rejects_inadmissible_flux_limiter() {
    let dir = tempfile::tempdir().unwrap();
    // The quadratic cost bounds admissible limiters by 0; +1 violates it.
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{
  "problem": {
    "name": "bad-limiter",
    "vertices": [
      {"id": "z1", "coords": [0.0, 0.0]},
      {"id": "z2", "coords": [0.0, 1.0]},
      {"id": "z3", "coords": [0.5, 0.5]}
    ],
    "arcs": [
      {"id": "g1", "start": "z1", "end": "z2"},
      {"id": "g2", "start": "z1", "end": "z3"},
      {"id": "g3", "start": "z2", "end": "z3"}
    ],
    "beta0": 4.0,
    "lagrangians": {
      "g1": {"kinetic": 0.5},
      "g2": {"kinetic": 0.5},
      "g3": {"kinetic": 0.5}
    },
    "flux_limiter": {"z1": 1.0, "z2": 1.0, "z3": 1.0},
    "initial": "zero"
  },
  "dx": 0.1,
  "dt_rule": "cfl:4",
  "T": 1.0
}"#,
    );
    let out = hjnet(&["validate", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("VIOLATION"), "{stdout}");
}

#[test]
fn run_reports_error_norms_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", TEST1_RUN);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    fs::create_dir(&out_a).unwrap();
    fs::create_dir(&out_b).unwrap();

    let out = hjnet(&["run", &cfg, "--out", out_a.to_str().unwrap()], dir.path());
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    let final_line = stdout.lines().last().unwrap();
    assert!(final_line.starts_with("E_inf="), "{final_line}");
    let e_inf: f64 = final_line
        .split_whitespace()
        .next()
        .unwrap()
        .trim_start_matches("E_inf=")
        .parse()
        .unwrap();
    assert!(e_inf <= 1e-4, "E_inf = {e_inf}");

    let out2 = hjnet(&["run", &cfg, "--out", out_b.to_str().unwrap()], dir.path());
    assert!(out2.status.success());
    for name in ["solution.csv", "error_profile.csv"] {
        let a = fs::read(out_a.join(name)).unwrap();
        let b = fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn run_fails_on_missing_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", TEST1_RUN);
    let out = hjnet(&["run", &cfg, "--out", "does/not/exist"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_rejects_dx_lists() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"problem": "test1", "dx": [0.1, 0.05], "dt_rule": "cfl:4", "T": 1.0}"#,
    );
    let out = hjnet(&["run", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_config_keys_are_rejected_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"problem": "test1", "dx": 0.1, "dt_rule": "cfl:4", "T": 1.0, "tpyo": 3}"#,
    );
    let out = hjnet(&["run", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("schema violation"), "{stderr}");
}

#[test]
fn bad_dt_rule_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"problem": "test1", "dx": 0.1, "dt_rule": "thirds", "T": 1.0}"#,
    );
    let out = hjnet(&["run", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn convergence_single_dx_matches_run_norms() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"problem": "test1", "dx": 0.1, "dt_rule": "half", "T": 1.0}"#,
    );
    let run_out = hjnet(&["run", &cfg], dir.path());
    assert!(run_out.status.success());
    let stdout = String::from_utf8_lossy(&run_out.stdout);
    let final_line = stdout.lines().last().unwrap();
    let mut parts = final_line.split_whitespace();
    let e_inf = parts.next().unwrap().trim_start_matches("E_inf=").to_string();
    let e_1 = parts.next().unwrap().trim_start_matches("E_1=").to_string();

    let conv_out = hjnet(&["convergence", &cfg], dir.path());
    assert!(conv_out.status.success());
    let table = fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next().unwrap(), "dx,dt_rule,dt_eff,E_inf,E_1,order_inf,order_1");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[1], "half");
    assert_eq!(row[3], e_inf);
    assert_eq!(row[4], e_1);
    assert_eq!(row[5], "");
}

#[test]
fn convergence_multi_rule_table_shape() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"problem": "test1", "dx": [0.1, 0.05], "dt_rule": ["pow45", "half", "cfl:4"], "T": 1.0}"#,
    );
    let out = hjnet(&["convergence", &cfg], dir.path());
    assert!(out.status.success());
    let table = fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 6);
    // Orders appear only from the second dx on.
    let with_order = table
        .lines()
        .skip(1)
        .filter(|l| !l.ends_with(",,") && !l.ends_with(','))
        .count();
    assert_eq!(with_order, 3);
}

#[test]
fn probe_reports_defects() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{
  "problem": "test1",
  "dx": 0.05,
  "dt_rule": "cfl:4",
  "T": 1.0,
  "probe": {"gradient": [0.0, -3.5], "quad": 0.5, "center": [0.0, 0.0]}
}"#,
    );
    let out = hjnet(&["probe", &cfg], dir.path());
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("max interior defect"), "{stdout}");
    let probe = fs::read_to_string(dir.path().join("probe.csv")).unwrap();
    assert!(probe.starts_with("arc_id,s,x1,x2,defect"));
    assert!(probe.lines().count() > 10);
}

#[test]
fn custom_problem_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{
  "problem": {
    "name": "segment",
    "vertices": [
      {"id": "a", "coords": [0.0, 0.0]},
      {"id": "b", "coords": [1.0, 0.0]}
    ],
    "arcs": [{"id": "g", "start": "a", "end": "b"}],
    "beta0": 2.0,
    "lagrangians": {
      "g": {"kinetic": 0.5, "state_terms": [{"coeff": 1.0, "kind": {"dist2": [0.5, 0.0]}}]}
    },
    "flux_limiter": {"a": -1.0, "b": -1.0},
    "initial": "one_minus_norm"
  },
  "dx": 0.1,
  "dt_rule": "cfl:2",
  "T": 0.5
}"#,
    );
    let out = hjnet(&["validate", &cfg], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let out = hjnet(&["run", &cfg], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // No reference for custom problems: a solution file, no error profile.
    assert!(dir.path().join("solution.csv").exists());
    assert!(!dir.path().join("error_profile.csv").exists());
}

#[test]
fn workers_flag_changes_nothing_in_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", TEST1_RUN);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    fs::create_dir(&out_a).unwrap();
    fs::create_dir(&out_b).unwrap();
    let one = hjnet(&["run", &cfg, "--out", out_a.to_str().unwrap(), "--workers", "1"], dir.path());
    let four =
        hjnet(&["run", &cfg, "--out", out_b.to_str().unwrap(), "--workers", "4"], dir.path());
    assert!(one.status.success() && four.status.success());
    assert_eq!(
        fs::read(out_a.join("solution.csv")).unwrap(),
        fs::read(out_b.join("solution.csv")).unwrap()
    );
}
