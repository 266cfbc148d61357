//! End-to-end runs of the `socp-tilt` binary.

use std::path::PathBuf;
use std::process::{Command, Output};

fn instance(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("instances").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_socp-tilt")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("report is JSON")
}

fn analyze(name: &str) -> Output {
    run(&["analyze", instance(name).to_str().unwrap()])
}

#[test]
fn analyze_exit_codes_follow_verdict() {
    let ok = analyze("out_of_kernel.json");
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    assert_eq!(json(&ok)["verdict"], "TILT_STABLE");

    let bad = analyze("unstable.json");
    assert_eq!(code(&bad), 1);
    assert_eq!(json(&bad)["verdict"], "NOT_TILT_STABLE");
}

#[test]
fn malformed_input_is_rejected_with_usage_code() {
    let out = analyze("malformed.json");
    assert_eq!(code(&out), 64);
    assert!(out.stdout.is_empty());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error:"), "{err}");
    assert!(err.contains("expected instance layout"), "{err}");

    let missing = analyze("no_such_file.json");
    assert_eq!(code(&missing), 64);

    assert_eq!(code(&run(&["analyze"])), 64);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut bodies = Vec::new();
    for i in 0..2 {
        let path = dir.path().join(format!("r{i}.json"));
        let out = run(&["analyze", instance("unstable.json").to_str().unwrap(), "--report", path.to_str().unwrap()]);
        assert_eq!(code(&out), 1);
        assert!(out.stdout.is_empty());
        bodies.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(bodies[0], bodies[1]);
    let v: serde_json::Value = serde_json::from_slice(&bodies[0]).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert!(v.get("timing").is_none());
}

#[test]
fn timing_flag_adds_timing_block() {
    let out = run(&["analyze", instance("out_of_kernel.json").to_str().unwrap(), "--timing"]);
    assert_eq!(code(&out), 0);
    assert!(json(&out)["timing"]["analysis_ms"].is_number());
}

#[test]
fn empirical_flag_adds_experiment() {
    let out = run(&["analyze", instance("out_of_kernel.json").to_str().unwrap(), "--empirical", "--tilt-grid", "5"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert!(v["empirical"].is_object(), "{v}");
    assert!(analyze("out_of_kernel.json").stdout != out.stdout);
}

#[test]
fn falsifier_exit_codes() {
    let out = run(&["falsify", "mscq", instance("out_of_kernel.json").to_str().unwrap(), "--samples", "500"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["test"], "mscq");
    assert_eq!(v["witness_found"], false);

    let out = run(&[
        "falsify",
        "neighborhood",
        instance("unstable.json").to_str().unwrap(),
        "--kappa",
        "1",
        "--eta",
        "0.01",
        "--samples",
        "2000",
    ]);
    assert_eq!(code(&out), 3);
    let v = json(&out);
    assert_eq!(v["test"], "neighborhood");
    assert_eq!(v["witness_found"], true);
}

#[test]
fn zero_samples_warns_and_succeeds() {
    let out = run(&["falsify", "mscq", instance("out_of_kernel.json").to_str().unwrap(), "--samples", "0"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["samples"], 0);
    assert!(!v["warnings"].as_array().unwrap().is_empty());
}
