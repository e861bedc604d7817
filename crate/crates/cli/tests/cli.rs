use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ksos(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ksos")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = ksos(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn config(name: &str) -> String {
    format!("{}/../../configs/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn solve_writes_a_run_that_certify_reads() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let text = ok(&["solve", "--n", "120", "--lambda", "1e-3", "--seed", "3", "--out-dir", out]);
    assert!(text.contains("Converged"), "{text}");
    let run = json(&dir.path().join("run.json"));
    assert_eq!(run["schema_version"], 1);
    assert_eq!(run["verb"], "solve");
    assert_eq!(run["points"].as_array().unwrap().len(), 120);
    let alpha: Vec<f64> = run["alpha"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-10);

    let cert = ok(&["certify", "--run", dir.path().join("run.json").to_str().unwrap(), "--m", "1", "--seminorm", "5", "--out-dir", out]);
    let printed: Value = serde_json::from_str(&cert).unwrap();
    assert_eq!(printed, json(&dir.path().join("certificate.json")));
    assert_eq!(printed["m"], 1);
    assert_eq!(printed["seminorm_heuristic"], false);
    let (c_cert, c_run) = (printed["c_hat"].as_f64().unwrap(), run["summary"]["c_hat"].as_f64().unwrap());
    assert!((c_cert - c_run).abs() <= 1e-9 * c_run.abs().max(1.0), "{c_cert} {c_run}");
    assert!(printed["localization_bound"].is_null());
}

#[test]
fn solve_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        ok(&["solve", "--n", "60", "--seed", "11", "--out-dir", d.path().to_str().unwrap()]);
    }
    assert_eq!(json(&a.path().join("run.json")), json(&b.path().join("run.json")));
}

#[test]
fn solve_reads_tabulated_data() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("samples.csv");
    let mut text = String::from("x1,x2,f\n");
    for i in 0..7 {
        for j in 0..7 {
            let (x, y) = (-1.0 + i as f64 / 3.0, -1.0 + j as f64 / 3.0);
            text += &format!("{x},{y},{}\n", (x - 0.3f64).powi(2) + (y + 0.2f64).powi(2));
        }
    }
    fs::write(&csv, text).unwrap();
    let out = dir.path().join("out");
    ok(&["solve", "--data", csv.to_str().unwrap(), "--sigma", "0.5", "--out-dir", out.to_str().unwrap()]);
    let run = json(&out.join("run.json"));
    assert_eq!(run["points"].as_array().unwrap().len(), 49);
    assert!(run["f_at_z"].is_null());
    let z: Vec<f64> = run["summary"]["z_hat"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(z.iter().all(|v| v.abs() <= 1.0));
    let heuristic = ksos(&["certify", "--run", out.join("run.json").to_str().unwrap(), "--f-at-z", "0"]);
    assert!(!heuristic.status.success(), "tabulated data has no function to estimate the seminorm from");
}

#[test]
fn localize_uses_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&["localize", "--config", &config("localize.toml"), "--stages", "3", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(text.lines().filter(|l| l.starts_with("stage ")).count(), 3);
    let run = json(&dir.path().join("run.json"));
    assert_eq!(run["verb"], "localize");
    assert_eq!(run["stages"].as_array().unwrap().len(), 3);
    assert_eq!(run["evaluations"], 450);
    let z: Vec<f64> = run["summary"]["z_hat"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    // deepest bump at (0.3, 0.4)
    assert!(((z[0] - 0.3).powi(2) + (z[1] - 0.4).powi(2)).sqrt() < 0.1, "{z:?}");

    let cert = ok(&["certify", "--run", dir.path().join("run.json").to_str().unwrap(), "--m", "2", "--seminorm", "10", "--fill", "given", "--h", "0.1"]);
    let cert: Value = serde_json::from_str(&cert).unwrap();
    assert!(cert["localization_bound"].as_f64().unwrap() >= 0.0);
}

#[test]
fn localize_needs_a_parabola_weight() {
    let dir = tempfile::tempdir().unwrap();
    let out = ksos(&["localize", "--n", "50", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--nu"));
}

#[test]
fn bench_writes_csv_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&["bench", "--config", &config("bumps.toml"), "--seed", "5", "--lambda", "1e-2", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(text.contains("median gap"));
    let mut rdr = csv::Reader::from_path(dir.path().join("results.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        [
            "method", "n", "seed", "lambda", "sigma", "nu", "c_hat", "f_at_z", "gap_to_true_min", "cert_bound",
            "iterations", "wall_ms"
        ]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 9);
    assert!(rows.iter().all(|r| &r[2] == "5"));
    assert!(rows.iter().all(|r| r[8].parse::<f64>().unwrap() >= 0.0));
    let svg = fs::read_to_string(dir.path().join("error_vs_n.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "schema_version = 99\n").unwrap();
    let out = ksos(&["solve", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema"));
    let out = ksos(&["solve", "--lambda", "-1", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = ksos(&["certify", "--run", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(ksos(&["frobnicate"]).status.code(), Some(2));
}
