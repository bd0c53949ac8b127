//! End-to-end checks of the command-line binary: exit codes, report
//! shape, configuration merging, and byte-identical reruns.

use std::process::{Command, Output};

fn sprays(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sprays"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_of(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn flat_positive_control_passes_assert() {
    let out = sprays(&[
        "funk-check",
        "--metric",
        "flat",
        "--candidate",
        "linear-rational",
        "--n",
        "2",
        "--samples",
        "100",
        "--seed",
        "42",
        "--assert",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json_of(&out);
    assert!(report["summary"]["sup_norm"].as_f64().unwrap() < 1e-10);
    assert_eq!(report["verdict"]["pass"], true);
}

#[test]
fn curved_metric_candidate_fails_assert_with_exit_3() {
    let out = sprays(&[
        "funk-check",
        "--metric",
        "sphere",
        "--candidate",
        "cF",
        "--c",
        "1.0",
        "--samples",
        "30",
        "--assert",
    ]);
    assert_eq!(out.status.code(), Some(3));
    let report = json_of(&out);
    assert_eq!(report["verdict"]["pass"], false);
}

#[test]
fn without_assert_failures_still_exit_0() {
    let out = sprays(&[
        "funk-check",
        "--metric",
        "sphere",
        "--candidate",
        "cF",
        "--samples",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn parse_errors_exit_1() {
    let out = sprays(&[
        "funk-check",
        "--metric",
        "flat",
        "--candidate-expr",
        "y1/(1-x1",
        "--samples",
        "5",
    ]);
    assert_eq!(out.status.code(), Some(1));

    let out = sprays(&["funk-check", "--metric", "unknown-metric"]);
    assert_eq!(out.status.code(), Some(1));

    let out = sprays(&["not-a-command"]);
    assert_eq!(out.status.code(), Some(1));

    let out = sprays(&["analyze", "--metric", "sphere", "--n", "7"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn numerical_failures_exit_2() {
    // Flat flag curvature violates the chain precondition.
    let out = sprays(&[
        "chain",
        "--metric",
        "euclidean",
        "--candidate",
        "cF",
        "--samples",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("precondition"));
}

#[test]
fn reports_are_byte_identical_across_reruns() {
    let args = [
        "analyze",
        "--metric",
        "klein",
        "--samples",
        "40",
        "--seed",
        "9",
    ];
    let a = sprays(&args);
    let b = sprays(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, sprays(&["analyze", "--metric", "klein", "--samples", "40", "--seed", "10"]).stdout);
}

#[test]
fn report_envelope_has_required_fields() {
    let out = sprays(&["analyze", "--metric", "sphere", "--samples", "20"]);
    let report = json_of(&out);
    for key in ["version", "command", "config", "summary", "samples", "verdict"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    assert_eq!(report["config"]["seed"], 42);
    assert!(report["samples"].as_array().unwrap().len() <= 1000);
}

#[test]
fn catalog_lists_documented_metrics() {
    let out = sprays(&["catalog"]);
    assert_eq!(out.status.code(), Some(0));
    let report = json_of(&out);
    let entries = report["summary"].as_array().unwrap();
    let find = |name: &str| {
        entries
            .iter()
            .find(|e| e["name"] == name)
            .unwrap_or_else(|| panic!("catalog missing {name}"))
    };
    assert_eq!(find("euclidean")["expected_kappa"], 0.0);
    assert_eq!(find("sphere")["expected_kappa"], 1.0);
    assert_eq!(find("klein")["expected_kappa"], -1.0);
    assert_eq!(find("funk-ball")["expected_kappa"], -0.25);
    for name in ["theta", "linear-rational", "cF", "aF"] {
        find(name);
    }
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = std::env::temp_dir().join(format!("sprays-cli-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("run.conf");
    std::fs::write(
        &path,
        "[metric]\nmetric = flat\ncandidate = linear-rational\n\n[sampling]\nsamples = 25\nseed = 5\n\n[tolerances]\nsup = 1e-10\n",
    )
    .unwrap();
    let out = sprays(&["funk-check", "--config", path.to_str().unwrap(), "--assert"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json_of(&out);
    assert_eq!(report["config"]["samples"], 25);
    assert_eq!(report["config"]["seed"], 5);
    assert_eq!(report["config"]["tolerances"]["sup"], 1e-10);

    // flag overrides file value
    let out = sprays(&[
        "funk-check",
        "--config",
        path.to_str().unwrap(),
        "--seed",
        "77",
    ]);
    let report = json_of(&out);
    assert_eq!(report["config"]["seed"], 77);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn domain_flag_restricts_sampling() {
    let out = sprays(&[
        "funk-check",
        "--metric",
        "flat",
        "--candidate",
        "theta",
        "--samples",
        "30",
        "--domain",
        "x:ball:0.3;y:1.0,1.5",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report = json_of(&out);
    assert_eq!(report["config"]["resolved_domain"]["x_ball"], 0.3);
    for row in report["samples"].as_array().unwrap() {
        let x: Vec<f64> = row["x"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        assert!(x.iter().map(|v| v * v).sum::<f64>().sqrt() <= 0.3 + 1e-12);
        let y: Vec<f64> = row["y"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((1.0..=1.5 + 1e-12).contains(&r));
    }

    let out = sprays(&["analyze", "--metric", "sphere", "--domain", "bogus"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn json_flag_writes_the_same_report_to_a_file() {
    let dir = std::env::temp_dir().join(format!("sprays-json-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("report.json");
    let out = sprays(&[
        "analyze",
        "--metric",
        "euclidean",
        "--samples",
        "10",
        "--json",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let on_disk = std::fs::read(&path).unwrap();
    assert_eq!(on_disk, out.stdout);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn metric_expression_with_declared_degree() {
    // A user-supplied euclidean metric behaves like the built-in one.
    let out = sprays(&[
        "analyze",
        "--metric-expr",
        "sqrt(y1^2+y2^2)",
        "--samples",
        "20",
        "--assert",
        "--tol",
        "residual=1e-8",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json_of(&out);
    assert!(report["summary"]["kappa_max"].as_f64().unwrap().abs() < 1e-10);

    // A wrong declared degree is caught by the Euler sampling check.
    let out = sprays(&[
        "analyze",
        "--metric-expr",
        "y1^2+y2^2",
        "--degree",
        "1",
        "--samples",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
