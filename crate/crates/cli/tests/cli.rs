use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn gapdecomp(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gapdecomp"));
    cmd.current_dir(fixtures()).args(args).env_remove("GAPDECOMP_WORKERS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout_ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn run_json(extra: &[&str], env: &[(&str, &str)]) -> Value {
    let mut args = vec!["run", "--data", "synthetic.csv", "--roles", "roles.toml", "--format", "json"];
    args.extend_from_slice(extra);
    serde_json::from_str(&stdout_ok(&gapdecomp(&args, env))).unwrap()
}

fn estimates(report: &Value) -> Vec<f64> {
    report["body"]["components"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["estimate"].as_f64().unwrap())
        .collect()
}

fn assert_adding_up(e: &[f64]) {
    assert!((e[0] - e[1] - e[2]).abs() < 1e-10, "{e:?}");
    assert!((e[0] - e[3] - e[4]).abs() < 1e-10, "{e:?}");
}

#[test]
fn oaxaca_report_matches_golden_file() {
    let args = [
        "run", "--data", "synthetic.csv", "--roles", "roles.toml", "--analysis", "oaxaca", "--seed", "42",
        "--bootstrap", "99", "--format", "json",
    ];
    let out = stdout_ok(&gapdecomp(&args, &[]));
    let golden = std::fs::read_to_string(fixtures().join("golden_oaxaca.json")).unwrap();
    assert_eq!(out, golden);
    let report: Value = serde_json::from_str(&out).unwrap();
    assert_adding_up(&estimates(&report));
    assert_eq!(report["sample"]["n_dropped_missing"], 2);
}

#[test]
fn ipw_is_deterministic_across_worker_counts() {
    let extra = ["--analysis", "ipw", "--bootstrap", "49", "--seed", "9"];
    let one = run_json(&extra, &[("GAPDECOMP_WORKERS", "1")]);
    let four = run_json(&extra, &[("GAPDECOMP_WORKERS", "4")]);
    let default = run_json(&extra, &[]);
    assert_eq!(one, four);
    assert_eq!(one, default);
    assert_adding_up(&estimates(&one));
}

#[test]
fn wider_trimming_never_keeps_more_rows() {
    let used = |trim: &str| {
        let r = run_json(&["--analysis", "ipw", "--bootstrap", "2", "--trim", trim], &[]);
        (r["sample"]["n_used"].as_u64().unwrap(), r["sample"]["n_trimmed"].as_u64().unwrap())
    };
    let (used_02, trimmed_02) = used("0.02");
    let (used_04, trimmed_04) = used("0.04");
    assert!(used_04 <= used_02);
    assert!(trimmed_04 >= trimmed_02);
    assert_eq!(used_02 + trimmed_02, used_04 + trimmed_04);
}

#[test]
fn trimming_only_on_the_mediator_score() {
    let both = run_json(&["--analysis", "ipw", "--bootstrap", "2", "--trim", "0.1"], &[]);
    let only = run_json(&["--analysis", "ipw", "--bootstrap", "2", "--trim", "0.1", "--trim-mediator-only"], &[]);
    assert!(only["sample"]["n_trimmed"].as_u64() <= both["sample"]["n_trimmed"].as_u64());
}

#[test]
fn experiment_estimates_recover_the_treatment_effect() {
    let args = [
        "run", "--data", "randomized.csv", "--roles", "randomized_roles.toml", "--analysis", "ate-experiment",
        "--format", "json", "--seed", "3",
    ];
    let report: Value = serde_json::from_str(&stdout_ok(&gapdecomp(&args, &[]))).unwrap();
    let rows = report["body"]["estimates"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let est = row["estimate"].as_f64().unwrap();
        let se = row["standard_error"].as_f64().unwrap();
        assert!((est - 2.0).abs() < 3.0 * se, "{row}");
    }
}

#[test]
fn errors_are_json_on_stderr() {
    let out = gapdecomp(&["run", "--data", "missing.csv", "--roles", "roles.toml", "--analysis", "oaxaca"], &[]);
    assert!(!out.status.success());
    assert!(out.stdout.is_empty());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"]["kind"].is_string());
    assert!(err["error"]["message"].is_string());

    let out = gapdecomp(
        &["run", "--data", "synthetic.csv", "--roles", "roles.toml", "--analysis", "ipw", "--trim", "0.6"],
        &[],
    );
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "config");

    let out = gapdecomp(
        &["run", "--data", "synthetic.csv", "--roles", "roles.toml", "--analysis", "ipw"],
        &[("GAPDECOMP_WORKERS", "zero")],
    );
    assert!(!out.status.success());
}

#[test]
fn balance_and_support_reports() {
    let balance = run_json(&["--analysis", "balance", "--mediators", "all"], &[]);
    let body = &balance["body"];
    assert_eq!(body["kind"], "balance");
    assert_eq!(body["unweighted"]["rows"].as_array().unwrap().len(), 4);
    assert!(body["reweighted"]["weighted"].as_bool().unwrap());

    let support = run_json(&["--analysis", "support", "--bins", "10"], &[]);
    let hist = &support["body"]["histogram"];
    assert_eq!(hist["bin_edges"].as_array().unwrap().len(), 11);
    let overlap = support["body"]["overlap"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&overlap));
}

#[test]
fn monte_carlo_on_a_design_file() {
    let args = [
        "run", "--data", "design.toml", "--analysis", "synth-mc", "--mc-estimator", "oaxaca", "--mc-reps", "50",
        "--format", "json",
    ];
    let report: Value = serde_json::from_str(&stdout_ok(&gapdecomp(&args, &[]))).unwrap();
    let mc = &report["body"]["report"];
    assert_eq!(mc["replications"], 50);
    assert_eq!(mc["components"].as_array().unwrap().len(), 5);
}

#[test]
fn text_and_csv_renderings() {
    let base = ["run", "--data", "synthetic.csv", "--roles", "roles.toml", "--analysis", "oaxaca", "--bootstrap", "9"];
    let text = stdout_ok(&gapdecomp(&[&base[..], &["--format", "text"]].concat(), &[]));
    for name in ["total m-f", "indir.f", "dir.f", "indir.m", "dir.m", "missings / trimmed"] {
        assert!(text.contains(name), "{text}");
    }

    let csv = stdout_ok(&gapdecomp(&[&base[..], &["--format", "csv", "--reference", "female"]].concat(), &[]));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4, "{csv}");
    assert!(lines[1].starts_with("total m-f,"));
    assert!(lines[3].starts_with("dir.f,"));
}

#[test]
fn generate_round_trip_with_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("draw.csv");
    let roles = dir.path().join("draw_roles.toml");
    let report = dir.path().join("report.json");
    let design = fixtures().join("design.toml");
    let status = gapdecomp(
        &[
            "generate", "--dgp", design.to_str().unwrap(), "--seed", "5", "--out", csv.to_str().unwrap(),
            "--roles-out", roles.to_str().unwrap(),
        ],
        &[],
    );
    stdout_ok(&status);
    let again = dir.path().join("again.csv");
    stdout_ok(&gapdecomp(
        &["generate", "--dgp", design.to_str().unwrap(), "--seed", "5", "--out", again.to_str().unwrap()],
        &[],
    ));
    assert_eq!(std::fs::read(&csv).unwrap(), std::fs::read(&again).unwrap());

    let out = gapdecomp(
        &[
            "run", "--data", csv.to_str().unwrap(), "--roles", roles.to_str().unwrap(), "--analysis", "oaxaca",
            "--bootstrap", "9", "--format", "json", "--out", report.to_str().unwrap(),
        ],
        &[],
    );
    assert!(stdout_ok(&out).is_empty());
    let parsed: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(parsed["sample"]["n_rows"], 600);
    assert_adding_up(&estimates(&parsed));
}
