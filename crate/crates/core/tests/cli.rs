use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

const H2: &str = "[[[2,0],[0,0.5]]]";

fn sl2lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sl2lab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_stdout(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn norm_identity_on_h2_passes() {
    let out = sl2lab(&["verify-theorem1", "--matrices", H2]);
    assert_eq!(out.status.code(), Some(0));
    let report = json_stdout(&out);
    assert_eq!(report["verdict"], "PASS");
    assert_eq!(report["command"], "verify-theorem1");
    assert!(report["results"]["abs_error"].as_f64().unwrap() <= 1e-8);
    assert!(report["version"].is_string());
    assert!(report["config"]["quadrature"]["max_grid"].is_number());
}

#[test]
fn empty_matrix_list_is_invalid() {
    let out = sl2lab(&["verify-theorem2", "--matrices", "[]"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn non_sl2_matrix_is_invalid() {
    let out = sl2lab(&["verify-theorem1", "--matrices", "[[[2,0],[0,2]]]"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_config_reports_location() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(&path, "{\n  \"n\": 3,\n  \"n\" 4\n}").unwrap();
    let out = sl2lab(&["star-probe", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn unknown_and_irrelevant_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(&path, r#"{"n": 3, "extra": true}"#).unwrap();
    let out = sl2lab(&["star-probe", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("extra"));

    fs::write(&path, r#"{"n": 3, "samples": 10}"#).unwrap();
    let out = sl2lab(&["star-probe", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("samples"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(
        &path,
        r#"{"command": "f-integral", "b": 10.0, "quadrature": {"initial_grid": 64, "max_grid": 65536, "tol": 1e-12}}"#,
    )
    .unwrap();
    let out = sl2lab(&[
        "f-integral",
        "--config",
        path.to_str().unwrap(),
        "--b",
        "1.5",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report = json_stdout(&out);
    assert_eq!(report["config"]["b"], 1.5);
    assert_eq!(report["config"]["quadrature"]["initial_grid"], 64);
    let want = std::f64::consts::TAU * 1.25f64.ln();
    assert!((report["results"]["rhs"].as_f64().unwrap() - want).abs() < 1e-14);
}

#[test]
fn bernoulli_writes_report_and_series() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("bern.json");
    let out = sl2lab(&[
        "bernoulli",
        "--n-max",
        "10000",
        "--seed",
        "7",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert!(report["results"]["rho_one_count"].as_u64().unwrap() > 0);
    let csv = fs::read_to_string(out_path.with_extension("csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("n,inv_n_log_rho,inv_n_log_norm,rho_is_one")
    );
    assert_eq!(lines.count(), 10_000);
}

#[test]
fn csv_format_uses_seventeen_digits() {
    let out = sl2lab(&["spectral-growth", "--n-max", "5", "--format", "csv"]);
    assert_eq!(
        out.status.code(),
        Some(1),
        "five steps are too few for the herman tolerance"
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let row = text.lines().nth(1).unwrap();
    let mantissa = row.split(',').nth(1).unwrap().split('e').next().unwrap();
    assert_eq!(mantissa.chars().filter(|c| c.is_ascii_digit()).count(), 17);
}

#[test]
fn dry_run_validates_without_computing() {
    let out = sl2lab(&["dedieu-shub", "--samples", "100000000", "--dry-run"]);
    assert_eq!(out.status.code(), Some(0));
    let plan = json_stdout(&out);
    assert_eq!(plan["dry_run"], true);
    assert_eq!(plan["config"]["samples"], 100_000_000);

    let out = sl2lab(&["dedieu-shub", "--samples", "10", "--dry-run"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn every_subcommand_has_dry_run() {
    for cmd in sl2lab::cli::Command::ALL {
        let mut args = vec![cmd.name(), "--dry-run"];
        match cmd.name() {
            "verify-theorem1" | "verify-theorem2" | "avg-expansion" | "fubini" | "centro-check"
            | "autoval-sample" => args.extend(["--matrices", H2]),
            "measure-bound" => args.extend(["--matrices", H2, "--a", "2"]),
            _ => {}
        }
        let out = sl2lab(&args);
        assert_eq!(out.status.code(), Some(0), "{}", cmd.name());
    }
}

#[test]
fn star_probe_at_one_step_has_no_gap() {
    let out = sl2lab(&["star-probe", "--n", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let report = json_stdout(&out);
    assert_eq!(report["results"]["gap"], 0.0);
    let out = sl2lab(&["star-probe", "--n", "23"]);
    assert_eq!(out.status.code(), Some(1));
}
