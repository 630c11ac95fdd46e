//! End-to-end checks of the binary: fixture generation, report contents,
//! exit codes, and byte-level determinism of report bodies (timing excluded).

use std::path::Path;
use std::process::{Command, Output};

fn palmot(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_palmot"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout_json(output: &Output) -> serde_json::Value {
    serde_json::from_slice(&output.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}",
            String::from_utf8_lossy(&output.stdout)
        )
    })
}

fn generate_pair(dir: &Path) {
    let gen_xi = palmot(
        &["generate", "lattice", "xi.json", "--n", "2", "--period", "2"],
        dir,
    );
    assert!(gen_xi.status.success());
    let gen_eta = palmot(
        &["generate", "shifted-lattice", "eta.json", "--n", "2", "--period", "2"],
        dir,
    );
    assert!(gen_eta.status.success());
}

#[test]
fn static_command_reports_the_shifted_lattice_cost() {
    let dir = tempfile::tempdir().unwrap();
    generate_pair(dir.path());
    let output = palmot(&["static", "xi.json", "eta.json", "--out", "run"], dir.path());
    assert!(output.status.success(), "{output:?}");
    let report = stdout_json(&output);
    let cost = report["scalars"]["cost"].as_f64().unwrap();
    assert!((cost - 0.0625).abs() < 1e-12, "cost {cost}");
    assert!(dir.path().join("run/report.json").exists());
    assert!(dir.path().join("run/plan.csv").exists());
    assert!(dir.path().join("run/kernel.csv").exists());
}

#[test]
fn reports_are_deterministic_up_to_timing() {
    let dir = tempfile::tempdir().unwrap();
    generate_pair(dir.path());
    let strip = |output: &Output| {
        let mut v = stdout_json(output);
        v.as_object_mut().unwrap().remove("timing");
        serde_json::to_string(&v).unwrap()
    };
    let first = palmot(
        &["verify", "--suites", "balancing,metric", "--seed", "7"],
        dir.path(),
    );
    let second = palmot(
        &["verify", "--suites", "balancing,metric", "--seed", "7"],
        dir.path(),
    );
    assert!(first.status.success() && second.status.success());
    assert_eq!(strip(&first), strip(&second));

    let third = palmot(
        &["static", "xi.json", "eta.json", "--seed", "7"],
        dir.path(),
    );
    let fourth = palmot(
        &["static", "xi.json", "eta.json", "--seed", "7"],
        dir.path(),
    );
    assert_eq!(strip(&third), strip(&fourth));
}

#[test]
fn geodesic_command_checks_the_action_identity() {
    let dir = tempfile::tempdir().unwrap();
    generate_pair(dir.path());
    let output = palmot(
        &["geodesic", "xi.json", "eta.json", "--times", "0,0.5,1", "--out", "run"],
        dir.path(),
    );
    assert!(output.status.success(), "{output:?}");
    let report = stdout_json(&output);
    assert_eq!(report["scalars"]["action"].as_f64().unwrap(), 0.0625);
    assert!(report["assertions"]
        .as_array()
        .unwrap()
        .iter()
        .all(|a| a["pass"].as_bool().unwrap()));
    assert!(dir.path().join("run/curve.csv").exists());
}

#[test]
fn intensity_mismatch_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    generate_pair(dir.path());
    let bad = palmot(
        &["generate", "lattice", "three.json", "--n", "3", "--period", "2"],
        dir.path(),
    );
    assert!(bad.status.success());
    let output = palmot(&["static", "xi.json", "three.json"], dir.path());
    assert_eq!(output.status.code(), Some(3), "{output:?}");
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("intensity mismatch"), "stderr: {stderr}");
}

#[test]
fn corrupted_suite_fails_with_numerical_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let output = palmot(
        &["verify", "--suites", "balancing", "--corrupt", "balancing", "--seed", "3"],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(2), "{output:?}");
    let report = stdout_json(&output);
    let failed = report["assertions"]
        .as_array()
        .unwrap()
        .iter()
        .any(|a| !a["pass"].as_bool().unwrap());
    assert!(failed);
}

#[test]
fn empty_suite_selection_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let output = palmot(&["verify", "--suites", ""], dir.path());
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn bb_command_produces_trace_and_solution_tables() {
    let dir = tempfile::tempdir().unwrap();
    for (kind, name) in [
        ("cosine-density", "rho0.json"),
        ("cosine-density-shifted", "rho1.json"),
    ] {
        let output = palmot(
            &["generate", kind, name, "--dimension", "1", "--period", "1", "--grid", "32"],
            dir.path(),
        );
        assert!(output.status.success());
    }
    let output = palmot(
        &[
            "bb", "rho0.json", "rho1.json", "--grid", "32", "--timesteps", "16", "--out", "run",
        ],
        dir.path(),
    );
    assert!(output.status.success(), "{output:?}");
    let report = stdout_json(&output);
    assert!(report["assertions"]
        .as_array()
        .unwrap()
        .iter()
        .all(|a| a["pass"].as_bool().unwrap()));
    let trace = std::fs::read_to_string(dir.path().join("run/trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,residual,objective"));
    assert!(trace.lines().count() > 10);
    let solution = std::fs::read_to_string(dir.path().join("run/solution.csv")).unwrap();
    assert!(solution.starts_with("t,x,rho,m"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    generate_pair(dir.path());
    std::fs::write(dir.path().join("config.json"), r#"{ "p": 3.0, "seed": 11 }"#).unwrap();
    let output = palmot(
        &["static", "xi.json", "eta.json", "--config", "config.json", "--p", "2.0"],
        dir.path(),
    );
    assert!(output.status.success());
    let report = stdout_json(&output);
    assert_eq!(report["config"]["p"].as_f64().unwrap(), 2.0);
    assert_eq!(report["config"]["seed"].as_u64().unwrap(), 11);

    let invalid = palmot(
        &["static", "xi.json", "eta.json", "--p", "0.5"],
        dir.path(),
    );
    assert_eq!(invalid.status.code(), Some(3));
}
