use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn complab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_complab"))
        .args(args)
        .env_remove("COMPLETENESS_LAB_THREADS")
        .output()
        .expect("binary runs")
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn list_scenarios_names_every_builtin() {
    let out = complab(&["list-scenarios"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in [
        "torus-incomplete-lightlike",
        "half-plane-homogeneous",
        "plane-wave-gravitational-4d",
        "ppwave-quartic-incomplete",
        "theorem1-quadratic-potential",
        "theorem1-quartic-violation",
        "second-symmetric-plane-wave",
    ] {
        assert!(text.contains(name), "missing {name}");
    }
}

#[test]
fn describe_prints_a_runnable_config() {
    let out = complab(&["describe", "half-plane-homogeneous"]);
    assert!(out.status.success());
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("half.json");
    fs::write(&cfg, &out.stdout).unwrap();
    let out_dir = dir.path().join("out");
    let run = complab(&["run", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let r = report(&out_dir);
    assert_eq!(r["initial_conditions"][0]["verdict"], "numerically-incomplete");
}

#[test]
fn describe_unknown_is_a_config_error() {
    let out = complab(&["describe", "no-such-scenario"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("torus-incomplete-lightlike"));
}

#[test]
fn run_builtin_writes_report_csv_and_meta() {
    let dir = tempfile::tempdir().unwrap();
    let out = complab(&["run", "torus-incomplete-lightlike", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    assert_eq!(r["format"], "completeness-lab/1");
    let ic = &r["initial_conditions"][0];
    assert_eq!(ic["verdict"], "numerically-incomplete");
    let t_star = ic["escape_estimate"]["t_star"].as_f64().unwrap();
    assert!((t_star - std::f64::consts::FRAC_1_PI).abs() < 1e-6);

    let csv = fs::read_to_string(dir.path().join("trajectory_0.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("t,x1,x2,v1,v2,u_metric,arc_length"));
    assert!(csv.lines().count() > 10);

    let meta: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("meta.json")).unwrap()).unwrap();
    assert!(meta["generated_at_unix"].as_u64().is_some());
}

#[test]
fn overrides_reach_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = complab(&[
        "run",
        "theorem1-quadratic-potential",
        "--out",
        dir.path().to_str().unwrap(),
        "--horizon",
        "1.5",
        "--rel-tol",
        "1e-9",
    ]);
    assert!(out.status.success());
    let r = report(dir.path());
    assert_eq!(r["settings"]["horizon"], 1.5);
    assert_eq!(r["settings"]["rel_tol"], 1e-9);
    assert_eq!(r["initial_conditions"][0]["t_end"], 1.5);
}

#[test]
fn empty_initial_conditions_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(
        &cfg,
        r#"{"name":"x","manifold":{"kind":"euclidean","dim":2},"initial_conditions":[]}"#,
    )
    .unwrap();
    let out = complab(&["run", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/initial_conditions"));
    assert!(!dir.path().join("o").join("report.json").exists());
}

#[test]
fn bad_tolerance_and_thread_env_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    let out = complab(&["run", "torus-incomplete-lightlike", "--out", o, "--rel-tol", "0.5"]);
    assert_eq!(out.status.code(), Some(2));

    let out = Command::new(env!("CARGO_BIN_EXE_complab"))
        .args(["run", "torus-incomplete-lightlike", "--out", o])
        .env("COMPLETENESS_LAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn expression_errors_point_at_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(
        &cfg,
        r#"{"name":"x","manifold":{"kind":"euclidean","dim":2},
            "problem":{"potential":"-x1^2 + y"},
            "initial_conditions":[{"x":[0,0],"v":[1,0]}]}"#,
    )
    .unwrap();
    let out = complab(&["run", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/problem/potential"));
}

#[test]
fn missing_file_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = complab(&["run", "/nonexistent/config.json", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unwritable_output_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = complab(&[
        "run",
        "torus-incomplete-lightlike",
        "--out",
        blocker.join("sub").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn thread_count_does_not_change_the_report() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, n) in [(&a, "1"), (&b, "3")] {
        let out = Command::new(env!("CARGO_BIN_EXE_complab"))
            .args(["run", "plane-wave-gravitational-4d", "--out", dir.path().to_str().unwrap()])
            .env("COMPLETENESS_LAB_THREADS", n)
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    let ra = fs::read(a.path().join("report.json")).unwrap();
    let rb = fs::read(b.path().join("report.json")).unwrap();
    assert_eq!(ra, rb);
}
