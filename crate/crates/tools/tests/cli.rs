use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const SESSION: &str = r#"{"packet_model":{"family":"gamma","params":[0.6,526.32]},"flow_size_pmf":{"kind":"zipf","support":[11,101,1001],"exponent":1.0},"n_flows":150,"seed":3}"#;
const PMF: &str = r#"{"kind":"zipf","support":[11,101,1001],"exponent":1.0}"#;

fn flowsum(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowsum")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = flowsum(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

fn params(json: &[u8]) -> Vec<f64> {
    let v: Value = serde_json::from_slice(json).unwrap();
    v["params"].as_array().unwrap().iter().map(|p| p.as_f64().unwrap()).collect()
}

fn read(p: &str) -> String {
    std::fs::read_to_string(Path::new(p)).unwrap()
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(flowsum(&["simulate", "--config", SESSION, "--n", "0"]).status.code(), Some(2));
    assert_eq!(flowsum(&["fit"]).status.code(), Some(2));
    assert_eq!(flowsum(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn module_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let bad = path(&dir, "bad.csv");
    std::fs::write(&bad, "s_f,s_d,size\n0.1,not-a-number,3\n").unwrap();
    let out = flowsum(&["fit", &bad, "--pmf", PMF]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn simulation_is_reproducible() {
    let a = ok(&["simulate", "--config", SESSION, "--seed", "7"]).stdout;
    let b = ok(&["simulate", "--config", SESSION, "--seed", "7", "--threads", "1"]).stdout;
    let c = ok(&["simulate", "--config", SESSION, "--seed", "8"]).stdout;
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(String::from_utf8(a).unwrap().starts_with("flow_id,timestamp_ns\n"));
}

#[test]
fn trace_and_netflow_inputs_give_the_same_fit() {
    let dir = TempDir::new().unwrap();
    let trace = path(&dir, "trace.csv");
    let netflow = path(&dir, "netflow.csv");
    ok(&["simulate", "--config", SESSION, "--out", &trace]);
    ok(&["aggregate", &trace, "--out", &netflow]);
    assert!(read(&netflow).starts_with("s_f,s_d,size\n"));
    let from_trace = params(&ok(&["fit", &trace, "--pmf", PMF]).stdout);
    let from_netflow = params(&ok(&["fit", &netflow, "--pmf", PMF]).stdout);
    for (a, b) in from_trace.iter().zip(&from_netflow) {
        assert!((a - b).abs() <= 1e-9 * a.abs(), "{from_trace:?} vs {from_netflow:?}");
    }
    assert!((from_trace[0] - 0.6).abs() < 0.15, "{from_trace:?}");
}

#[test]
fn thinned_pipeline_fits() {
    let dir = TempDir::new().unwrap();
    let trace = path(&dir, "trace.csv");
    let thinned = path(&dir, "thinned.csv");
    ok(&["simulate", "--config", SESSION, "--out", &trace]);
    ok(&["thin", &trace, "--q", "0.5", "--seed", "2", "--out", &thinned]);
    assert!(read(&thinned).lines().count() < read(&trace).lines().count());
    let out = ok(&["fit", &thinned, "--estimator", "mle-sampled", "--q", "0.5", "--pmf", PMF]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["family"], "gamma");
    assert!(v["params"][0].as_f64().unwrap() > 0.0);
}

#[test]
fn moment_estimators_report_json() {
    let dir = TempDir::new().unwrap();
    let trace = path(&dir, "trace.csv");
    ok(&["simulate", "--config", SESSION, "--out", &trace]);
    for est in ["mom", "mom-netflow"] {
        let v: Value = serde_json::from_slice(&ok(&["fit", &trace, "--estimator", est]).stdout).unwrap();
        assert!(v["alpha"].as_f64().unwrap() > 0.0, "{est}: {v}");
    }
}

#[test]
fn survival_curve_has_header_and_requested_points() {
    let dir = TempDir::new().unwrap();
    let trace = path(&dir, "trace.csv");
    ok(&["simulate", "--config", SESSION, "--out", &trace]);
    let out = ok(&["survival", &trace, "--points", "25", "--model", r#"{"family":"gamma","params":[0.6,526.32]}"#]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,s_empirical,s_model"));
    assert_eq!(lines.count(), 25);
}

#[test]
fn bound_reports_sample_size() {
    let out = ok(&[
        "bound",
        "--pmf",
        PMF,
        "--model",
        r#"{"family":"gamma","params":[0.6,526.32]}"#,
        "--seed",
        "5",
    ]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let n = v["n_min"].as_u64().unwrap();
    assert!((40..200).contains(&n), "{v}");
    let low = flowsum(&["bound", "--pmf", PMF, "--model", r#"{"family":"gamma","params":[0.6,526.32]}"#, "--mc-samples", "10"]);
    assert_eq!(low.status.code(), Some(1));
}

fn without_timing(csv: &str) -> Vec<String> {
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "wall_time_mean").unwrap();
    csv.lines()
        .map(|l| l.split(',').enumerate().filter(|(i, _)| *i != col).map(|(_, f)| f).collect::<Vec<_>>().join(","))
        .collect()
}

#[test]
fn study_csv_is_reproducible_across_thread_counts() {
    let cfg = format!(r#"{{"session":{SESSION},"estimators":["mle","mom-netflow"],"n_grid":[40,80],"replicates":3,"seed":11}}"#);
    let a = ok(&["study", "--config", &cfg, "--threads", "1"]).stdout;
    let b = ok(&["study", "--config", &cfg, "--threads", "4"]).stdout;
    let (a, b) = (String::from_utf8(a).unwrap(), String::from_utf8(b).unwrap());
    assert_eq!(without_timing(&a), without_timing(&b));
    assert!(a.lines().count() > 1);
}
