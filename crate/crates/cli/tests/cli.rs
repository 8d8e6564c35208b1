use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn nlmagic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlmagic"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn section_value(report: &Value, section: &str, name: &str) -> f64 {
    report["sections"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["label"] == section)
        .unwrap()["values"]
        .as_array()
        .unwrap()
        .iter()
        .find(|v| v["name"] == name)
        .unwrap()["value"]
        .as_f64()
        .unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn magic_exact_lm() {
    let out = nlmagic(&["magic", "exact", "--state", "LM", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert!((section_value(&r, "oracle", "m2") - 0.415_037_499_278_843_8).abs() < 1e-12);
    assert!(section_value(&r, "oracle", "m2_nonlocal").abs() < 1e-12);
}

#[test]
fn exhaustive_scenario_passes_and_unmitigated_readout_flags() {
    let dir = tempfile::tempdir().unwrap();
    let clean = write(
        dir.path(),
        "lm.json",
        r#"{"schema_version":1,"name":"lm","state":{"id":"LM"},"estimators":["sre"],"exhaustive":true}"#,
    );
    let out = nlmagic(&["rcm", "estimate", "--scenario", &clean, "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    assert!((section_value(&json(&out), "sre", "m2") - 0.415_037_499_278_843_8).abs() < 1e-9);

    let noisy = write(
        dir.path(),
        "noisy.json",
        r#"{"schema_version":1,"name":"noisy","state":{"id":"LM"},"estimators":["sre"],"exhaustive":true,
            "noise":{"readout":{"per_qubit_eps":[[0.04,0.04],[0.04,0.04]]}}}"#,
    );
    assert_eq!(nlmagic(&["rcm", "estimate", "--scenario", &noisy]).status.code(), Some(2));
    let fixed = fs::read_to_string(&noisy).unwrap().replace("\"exhaustive\":true", "\"exhaustive\":true,\"mitigation\":true");
    let fixed = write(dir.path(), "fixed.json", &fixed);
    assert_eq!(nlmagic(&["rcm", "estimate", "--scenario", &fixed]).status.code(), Some(0));
}

#[test]
fn errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.json",
        r#"{"schema_version":1,"name":"bad","state":{"id":"LM"},"estimators":[]}"#,
    );
    let out = nlmagic(&["rcm", "estimate", "--scenario", &bad]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("estimator list is empty"));
    assert_eq!(nlmagic(&["magic", "exact", "--state", "nope"]).status.code(), Some(1));
    assert_eq!(nlmagic(&["rcm", "estimate", "--scenario", "/nonexistent.json"]).status.code(), Some(1));
}

#[test]
fn same_seed_same_bytes() {
    let args = ["rcm", "estimate", "--state", "M", "--p-dep", "0.96", "--seed", "11", "--format", "json"];
    let a = nlmagic(&args);
    let b = nlmagic(&args);
    assert_eq!(a.status.code(), b.status.code());
    assert_eq!(a.stdout, b.stdout);
    let c = nlmagic(&["rcm", "estimate", "--state", "M", "--p-dep", "0.96", "--seed", "12", "--format", "json"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn fig4_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = nlmagic(&["report", "fig4", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("overall: PASS"));
    for f in ["fig4.json", "fig4.txt", "fig4_summary.csv", "fig4_noisy.csv", "fig4_noise_free.csv"] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }
    let csv = fs::read_to_string(out_dir.join("fig4_noisy.csv")).unwrap();
    assert!(csv.starts_with("gamma_deg,phi_deg,m2\n"));
    assert_eq!(csv.lines().count(), 1 + 49 * 49);
}

#[test]
fn fig3_exact_csv() {
    let out = nlmagic(&["report", "fig3", "--p-dep", "1", "--exhaustive", "--step-deg", "15", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("theta_deg,m2_estimate"));
    let last: Vec<f64> = text.lines().last().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(last[0], 45.0);
    assert!((last[1] - 0.415_037_499_278_843_8).abs() < 1e-9);
}

#[test]
fn mitigate_recovers_exact_distribution() {
    let dir = tempfile::tempdir().unwrap();
    // Λ·(0.7, 0.3) for ε01 = 0.1, ε10 = 0.2.
    let probs = write(dir.path(), "p.json", "[0.69, 0.31]");
    let out = nlmagic(&["mitigate", "--probs", &probs, "--eps", "0.1,0.2", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let row: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!((row[2] - 0.7).abs() < 1e-9);
    let lam = write(dir.path(), "lam.json", "[[0.9, 0.2], [0.1, 0.8]]");
    let out = nlmagic(&["mitigate", "--probs", &probs, "--lambda", &lam, "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    assert!((json(&out)["curves"][0]["rows"][1][2].as_f64().unwrap() - 0.3).abs() < 1e-9);
}

#[test]
fn erase_optimize_and_sweep() {
    let out = nlmagic(&["erase", "optimize", "--state", "M", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    let res = section_value(&r, "optimum", "residual_m2");
    assert!((res - section_value(&r, "optimum", "m2_nonlocal")).abs() < 1e-6);

    let out = nlmagic(&["erase", "sweep", "--state", "Fig4", "--step-deg", "7.5", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    assert!((section_value(&json(&out), "minimum", "min_m2") - 0.192_645_08).abs() < 1e-6);
}

#[test]
fn fit_rb_with_interleaved_curve() {
    let dir = tempfile::tempdir().unwrap();
    let curve = |p: f64| {
        let mut s = String::from("n,survival\n");
        for n in (1..200).step_by(10) {
            s += &format!("{n},{}\n", 0.5 * p.powi(n) + 0.5);
        }
        s
    };
    let rb = write(dir.path(), "rb.csv", &curve(0.986));
    let irb = write(dir.path(), "irb.csv", &curve(0.96));
    let out = nlmagic(&["fit", "rb", "--csv", &rb, "--irb", &irb, "--d", "4", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert!((section_value(&r, "rb", "p") - 0.986).abs() < 1e-9);
    assert!((section_value(&r, "irb", "fidelity") - 0.980_223).abs() < 1e-5);
}

#[test]
fn table1_report_runs() {
    let out = nlmagic(&["report", "table1", "--seed", "3", "--format", "json"]);
    assert!(matches!(out.status.code(), Some(0) | Some(2)));
    let r = json(&out);
    assert_eq!(r["sections"].as_array().unwrap().len(), 4);
    assert!((section_value(&r, "LM", "purity_model") - 0.94).abs() < 1e-12);
}
