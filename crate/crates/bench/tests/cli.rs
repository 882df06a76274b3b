use std::path::Path;
use std::process::{Command, Output};

use ils_core::problems::{write_problem, ProblemHeader};
use ils_core::PartitionedProblem;
use nalgebra::{DMatrix, DVector};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ils-split"))
        .args(args)
        .env_remove("ILS_SPLIT_THREADS")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

fn running_example(dir: &Path) -> String {
    let prob = PartitionedProblem::new(
        DMatrix::identity(2, 2) * 2.0,
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        DVector::from_vec(vec![2.0, 2.0]),
        DVector::from_vec(vec![1.0]),
    )
    .unwrap();
    write_problem(&prob, &ProblemHeader::custom(&prob), dir).unwrap();
    dir.to_str().unwrap().to_string()
}

#[test]
fn generate_ex1_records_effective_scale() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ex1");
    let o = bin(&[
        "generate", "ex1", "--p", "400", "--n", "110", "--q", "110", "--seed", "1",
        "--auto-scale", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let h = json(&o);
    assert_eq!(h["generator"], "ex1");
    assert!(h["scale"].as_f64().unwrap() > 0.0);
    for f in ["header.json", "A1.mtx", "A2.mtx", "b1.mtx", "b2.mtx"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn generate_ex2_records_sigma() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ex2");
    let o = bin(&[
        "generate", "ex2", "--n", "16", "--p", "24", "--epsilon", "1e-3", "--seed", "7",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let h = json(&o);
    assert!(h["sigma"].as_f64().unwrap() > 0.0);
    assert_eq!(h["definite"], true);
}

#[test]
fn generate_exit_codes() {
    assert_eq!(code(&bin(&["generate", "ex1", "--p", "4", "--n", "2"])), 64);
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    let o = bin(&["generate", "ex1", "--p", "4", "--n", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert_eq!(code(&bin(&["generate", "ex9", "--n", "2", "--out", "x"])), 64);
    assert_eq!(code(&bin(&["frobnicate"])), 64);
    assert_eq!(code(&bin(&["--help"])), 0);
}

#[test]
fn solve_ds_on_running_example() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = running_example(tmp.path());
    let o = bin(&[
        "solve", "--problem", &dir, "--method", "ds", "--alpha", "1", "--tol", "1e-8",
        "--kmax", "10000", "--spectral",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let row = json(&o);
    assert_eq!(row["converged"], true);
    assert!(row["final_res"].as_f64().unwrap() < 1e-8);
    assert_eq!(row["method"], "ds");
    assert!((row["rho"].as_f64().unwrap() - 0.558257569495584).abs() < 1e-9);
}

#[test]
fn solve_non_converged_is_a_result() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = running_example(tmp.path());
    let o = bin(&["solve", "--problem", &dir, "--method", "ds", "--kmax", "3"]);
    assert_eq!(code(&o), 0);
    let row = json(&o);
    assert_eq!(row["converged"], false);
    assert_eq!(row["it"], 3);
}

#[test]
fn solve_bad_parameters_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = running_example(tmp.path());
    let adi = bin(&["solve", "--problem", &dir, "--method", "adi", "--alpha", "2", "--beta", "1"]);
    assert_eq!(code(&adi), 64);
    assert_eq!(code(&bin(&["solve", "--problem", &dir, "--method", "ds", "--alpha", "-1"])), 64);
    assert_eq!(code(&bin(&["solve", "--problem", &dir, "--method", "xyz"])), 64);
    assert_eq!(code(&bin(&["solve", "--problem", &dir, "--method", "sp", "--tol", "0"])), 64);
}

#[test]
fn spectral_report_on_running_example() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = running_example(tmp.path());
    let o = bin(&["spectral", "--problem", &dir, "--alpha", "1"]);
    assert_eq!(code(&o), 0);
    let r = json(&o);
    assert!((r["rho"].as_f64().unwrap() - 0.558).abs() < 1e-3);
    assert_eq!(r["unit_disk_all"], true);
    assert_eq!(r["shen_ok"], true);
    assert!(r["lambda_one_gap"].as_f64().unwrap() > 0.0);
    assert_eq!(code(&bin(&["spectral", "--problem", &dir, "--alpha", "1", "--cap", "3"])), 65);
}

#[test]
fn malformed_problem_dir_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nothing");
    assert_eq!(code(&bin(&["spectral", "--problem", missing.to_str().unwrap(), "--alpha", "1"])), 66);
    let dir = running_example(tmp.path());
    std::fs::write(tmp.path().join("A1.mtx"), "not a matrix\n").unwrap();
    assert_eq!(code(&bin(&["spectral", "--problem", &dir, "--alpha", "1"])), 66);
    assert_eq!(code(&bin(&["solve", "--problem", &dir, "--method", "sp"])), 66);
}

const CONFIG: &str = r#"{
  "instances": [
    {"generator": "random", "n": 6, "seed": 1},
    {"generator": "ex1", "p": 60, "n": 8, "seed": 2, "auto_scale": true}
  ],
  "methods": [
    {"method": "sp"},
    {"method": "gsp", "alpha": [1e-6]},
    {"method": "adi", "alpha": [1e-6], "beta": [1e15]},
    {"method": "ds", "alpha": [0.5, 2]}
  ],
  "repetitions": 2,
  "spectral": true
}"#;

fn bench_csv(dir: &Path, extra: &[&str]) -> String {
    let cfg = dir.join("cfg.json");
    std::fs::write(&cfg, CONFIG).unwrap();
    let mut args = vec!["bench", "--config", cfg.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = bin(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn without_timing(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| {
            l.split(',')
                .enumerate()
                .filter(|(i, _)| *i != 7 && *i != 8)
                .map(|(_, v)| v)
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect()
}

#[test]
fn bench_csv_header_is_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = bench_csv(tmp.path(), &[]);
    assert_eq!(
        csv.lines().next().unwrap(),
        "method,p,q,n,alpha,beta,it,setup_seconds,loop_seconds,final_res,converged,rho"
    );
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 10);
    let methods: Vec<&str> = rows.iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(methods, ["SP", "GSP", "ADI", "DS", "DS", "SP", "GSP", "ADI", "DS", "DS"]);
    for r in &rows {
        let f: Vec<&str> = r.split(',').collect();
        assert_eq!(f.len(), 12);
        if f[0] == "DS" {
            assert!(f[5].is_empty());
        }
        if f[10] == "true" {
            assert!(f[9].parse::<f64>().unwrap() < 1e-8);
        }
        assert!(f[11].parse::<f64>().unwrap() < 1.0);
    }
}

#[test]
fn bench_is_deterministic_modulo_timing() {
    let tmp = tempfile::tempdir().unwrap();
    let a = bench_csv(tmp.path(), &[]);
    let b = bench_csv(tmp.path(), &[]);
    assert_eq!(without_timing(&a), without_timing(&b));
}

#[test]
fn parallel_bench_blanks_timing() {
    let tmp = tempfile::tempdir().unwrap();
    let serial = bench_csv(tmp.path(), &[]);
    let par = bench_csv(tmp.path(), &["--parallel"]);
    assert_eq!(without_timing(&serial), without_timing(&par));
    for l in par.lines().skip(1) {
        let f: Vec<&str> = l.split(',').collect();
        assert!(f[7].is_empty() && f[8].is_empty());
    }
}

#[test]
fn bench_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, r#"{"instances": [], "methods": []}"#).unwrap();
    assert_eq!(code(&bin(&["bench", "--config", cfg.to_str().unwrap()])), 64);
    assert_eq!(code(&bin(&["bench", "--config", "/nonexistent/cfg.json"])), 66);
    assert_eq!(code(&bin(&["bench"])), 64);
}

#[test]
fn thread_env_is_validated() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = running_example(tmp.path());
    let o = Command::new(env!("CARGO_BIN_EXE_ils-split"))
        .args(["solve", "--problem", &dir, "--method", "ds"])
        .env("ILS_SPLIT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 64);
    let o = Command::new(env!("CARGO_BIN_EXE_ils-split"))
        .args(["solve", "--problem", &dir, "--method", "ds"])
        .env("ILS_SPLIT_THREADS", "4")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
}

#[test]
fn sweep_alpha_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = running_example(tmp.path());
    let o = bin(&["sweep-alpha", "--problem", &dir, "--alpha-min", "1e-2", "--alpha-max", "1e1"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "alpha,it,setup_seconds,loop_seconds,rho,converged,final_res");
    let alphas: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(alphas, ["0.01", "0.1", "1", "10"]);
    assert_eq!(
        code(&bin(&["sweep-alpha", "--problem", &dir, "--method", "sp", "--alpha-min", "1", "--alpha-max", "1"])),
        64
    );
}
