mod common;

use std::path::Path;
use std::process::{Command, Output};

fn skan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skan"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn strip_timing(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f[9] = "";
            f.join(",")
        })
        .collect()
}

#[test]
fn gradcheck_passes_and_refuses_large_dims() {
    let o = skan(&[
        "gradcheck",
        "--basis",
        "lss",
        "--dims",
        "4,3,2",
        "--seed",
        "0",
    ]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS"));

    let o = skan(&["gradcheck", "--basis", "lrelu", "--dims", "4,3,2"]);
    assert!(o.status.success(), "{}", stdout(&o));

    let o = skan(&["gradcheck", "--dims", "784,100,10"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("finite differencing"));
}

#[test]
fn budget_table_output() {
    let o = skan(&[
        "budget",
        "--budget",
        "80000",
        "--n-in",
        "784",
        "--n-out",
        "10",
        "--spline-order",
        "3",
    ]);
    assert!(o.status.success());
    let hidden: Vec<String> = stdout(&o)
        .lines()
        .skip(2)
        .take(5)
        .map(|l| l.split_whitespace().nth(1).unwrap().to_string())
        .collect();
    assert_eq!(hidden, ["17", "15", "13", "12", "11"]);
}

#[test]
fn bases_lists_all_nine() {
    let o = skan(&["bases"]);
    let out = stdout(&o);
    for name in [
        "lrelu",
        "lleakyrelu",
        "lswish",
        "lmish",
        "lsoftplus",
        "lhardsigmoid",
        "lelu",
        "lss",
        "lgelu",
    ] {
        assert!(out.lines().any(|l| l.starts_with(name)), "{name} missing");
    }
    assert_eq!(out.lines().count(), 9);
}

#[test]
fn unknown_basis_and_bad_dims_are_usage_errors() {
    assert!(!skan(&["gradcheck", "--basis", "sine"]).status.success());
    assert!(!skan(&["gradcheck", "--dims", "4,0,2"]).status.success());
}

#[test]
fn missing_data_is_a_startup_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let o = skan(&[
        "train",
        "--data-dir",
        dir.path().to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

fn run_train(dir: &Path, out: &Path) -> String {
    let o = skan(&[
        "train",
        "--dims",
        "784,8,10",
        "--epochs",
        "2",
        "--batch",
        "40",
        "--lr",
        "0.01",
        "--deterministic",
        "--data-dir",
        dir.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::read_to_string(out).unwrap()
}

#[test]
fn deterministic_train_reruns_match_and_checkpoint_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    common::write_synthetic_mnist(dir.path(), 400, 100);
    let a = run_train(dir.path(), &dir.path().join("a.csv"));
    let b = run_train(dir.path(), &dir.path().join("b.csv"));
    assert_eq!(a.lines().count(), 1 + 4);
    assert_eq!(strip_timing(&a), strip_timing(&b));

    let ckpt = dir.path().join("net.skan");
    let o = skan(&[
        "train",
        "--dims",
        "784,8,10",
        "--epochs",
        "1",
        "--data-dir",
        dir.path().to_str().unwrap(),
        "--out",
        dir.path().join("c.csv").to_str().unwrap(),
        "--save",
        ckpt.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let o = skan(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("lss 784x8x10"));
}

#[test]
fn default_grid_sweep_emits_27_rates() {
    let dir = tempfile::tempdir().unwrap();
    common::write_synthetic_mnist(dir.path(), 100, 50);
    let out = dir.path().join("s.csv");
    let o = skan(&[
        "sweep",
        "--grid",
        "paper",
        "--repeats",
        "1",
        "--epochs",
        "1",
        "--dims",
        "784,4,10",
        "--batch",
        "50",
        "--data-dir",
        dir.path().to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let lrs: std::collections::BTreeSet<String> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().to_string())
        .collect();
    assert_eq!(lrs.len(), 27);
    assert!(lrs.contains("0.004"));
    assert_eq!(text.lines().count(), 1 + 27 * 2);
    let summary = std::fs::read_to_string(dir.path().join("s.summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 27 * 2);
}
