use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn marginkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_marginkd")).args(args).output().expect("spawn marginkd")
}

fn run_ok(args: &[&str]) -> Output {
    let out = marginkd(args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "args {args:?}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn data_rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

/// Small 2-class data that trains in well under a second.
fn small_data(tmp: &TempDir) -> std::path::PathBuf {
    let dir = tmp.path().join("data");
    run_ok(&[
        "gen-data", "--classes", "2", "--views-per-class", "2", "--per-view", "20", "--d-in", "8",
        "--out", p(&dir),
    ]);
    dir.join("data.csv")
}

#[test]
fn gen_data_row_count_and_determinism() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    run_ok(&["gen-data", "--seed", "7", "--out", p(&a)]);
    run_ok(&["gen-data", "--seed", "7", "--out", p(&b)]);
    run_ok(&["gen-data", "--seed", "8", "--out", p(&c)]);
    assert_eq!(data_rows(&a.join("data.csv")), 4 * 3 * 50);
    assert_eq!(fs::read(a.join("data.csv")).unwrap(), fs::read(b.join("data.csv")).unwrap());
    assert_ne!(fs::read(a.join("data.csv")).unwrap(), fs::read(c.join("data.csv")).unwrap());
    assert!(a.join("resolved.conf").exists());

    let d = tmp.path().join("d");
    run_ok(&["gen-data", "--classes", "3", "--views-per-class", "2", "--per-view", "5", "--out", p(&d)]);
    assert_eq!(data_rows(&d.join("data.csv")), 30);
}

#[test]
fn malformed_arguments_exit_2() {
    let tmp = TempDir::new().unwrap();
    let out = marginkd(&["gen-data", "--classes", "two", "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    let out = marginkd(&["train-teacher", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    let out = marginkd(&["train-teacher", "--cache-mode", "lifo", "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn unknown_config_key_exits_2() {
    let tmp = TempDir::new().unwrap();
    let conf = tmp.path().join("bad.conf");
    fs::write(&conf, "epochz = 3\n").unwrap();
    let out = marginkd(&["train-teacher", "--config", p(&conf), "--out", p(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn default_teacher_run_writes_checkpoint_and_full_log() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    run_ok(&["gen-data", "--out", p(&data)]);
    let out = tmp.path().join("teacher");
    let csv = data.join("data.csv");
    run_ok(&["train-teacher", "--data", p(&csv), "--lambda", "0.02", "--delta", "0.1", "--out", p(&out)]);
    assert!(out.join("teacher.ckpt").exists());
    assert!(out.join("resolved.conf").exists());
    assert!(out.join("cache_stats.json").exists());
    assert_eq!(data_rows(&out.join("train_log.csv")), 90);
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["command"], "train-teacher");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn teacher_and_student_are_reproducible() {
    let tmp = TempDir::new().unwrap();
    let data = small_data(&tmp);
    let mut ckpts = Vec::new();
    for run in ["t1", "t2"] {
        let dir = tmp.path().join(run);
        run_ok(&["train-teacher", "--data", p(&data), "--epochs", "4", "--lambda", "0.05", "--out", p(&dir)]);
        assert_eq!(data_rows(&dir.join("train_log.csv")), 4);
        ckpts.push(fs::read(dir.join("teacher.ckpt")).unwrap());
    }
    assert_eq!(ckpts[0], ckpts[1]);

    let teacher = tmp.path().join("t1").join("teacher.ckpt");
    let mut students = Vec::new();
    for run in ["s1", "s2"] {
        let dir = tmp.path().join(run);
        run_ok(&["distill", "--data", p(&data), "--teacher", p(&teacher), "--epochs", "3", "--out", p(&dir)]);
        assert!(dir.join("resolved.conf").exists());
        assert_eq!(data_rows(&dir.join("train_log.csv")), 3);
        students.push(fs::read(dir.join("student.ckpt")).unwrap());
    }
    assert_eq!(students[0], students[1]);
    let conf = fs::read_to_string(tmp.path().join("s1").join("resolved.conf")).unwrap();
    assert!(conf.lines().any(|l| l == "epochs = 3"));
}

#[test]
fn command_line_overrides_config_file() {
    let tmp = TempDir::new().unwrap();
    let data = small_data(&tmp);
    let conf = tmp.path().join("run.conf");
    fs::write(&conf, "# short run\nepochs = 3\nlambda = 0\n").unwrap();

    let a = tmp.path().join("a");
    run_ok(&["train-teacher", "--config", p(&conf), "--data", p(&data), "--out", p(&a)]);
    assert_eq!(data_rows(&a.join("train_log.csv")), 3);

    let b = tmp.path().join("b");
    run_ok(&["train-teacher", "--config", p(&conf), "--data", p(&data), "--epochs", "2", "--out", p(&b)]);
    assert_eq!(data_rows(&b.join("train_log.csv")), 2);
    let resolved = fs::read_to_string(b.join("resolved.conf")).unwrap();
    assert!(resolved.lines().any(|l| l == "epochs = 2"));
    assert!(resolved.lines().any(|l| l == "lambda = 0.0" || l == "lambda = 0"));
}

#[test]
fn missing_inputs_exit_3() {
    let tmp = TempDir::new().unwrap();
    let data = small_data(&tmp);
    let missing = tmp.path().join("nope.ckpt");
    let out = marginkd(&["distill", "--data", p(&data), "--teacher", p(&missing), "--out", p(&tmp.path().join("s"))]);
    assert_eq!(out.status.code(), Some(3));
    let out = marginkd(&["train-teacher", "--data", p(&tmp.path().join("nope.csv")), "--out", p(&tmp.path().join("t"))]);
    assert_eq!(out.status.code(), Some(3));
    let out = marginkd(&["report", "--from", p(&tmp.path().join("nowhere"))]);
    assert_eq!(out.status.code(), Some(3));
    let out = marginkd(&["gen-data", "--config", p(&tmp.path().join("nope.conf")), "--out", p(&tmp.path().join("g"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn distill_rejects_mismatched_teacher() {
    let tmp = TempDir::new().unwrap();
    let data = small_data(&tmp);
    let other = tmp.path().join("other");
    run_ok(&["gen-data", "--classes", "3", "--views-per-class", "1", "--per-view", "10", "--d-in", "8", "--out", p(&other)]);
    let t = tmp.path().join("t");
    run_ok(&["train-teacher", "--data", p(&other.join("data.csv")), "--epochs", "1", "--out", p(&t)]);
    let out = marginkd(&["distill", "--data", p(&data), "--teacher", p(&t.join("teacher.ckpt")), "--out", p(&tmp.path().join("s"))]);
    assert_eq!(out.status.code(), Some(2));
}

const SHORT_VERIFY: [&str; 12] = [
    "verify", "--anchors", "10", "--lambdas", "1", "--seeds", "0", "--steps", "300", "--per-class", "6", "--dim",
];

#[test]
fn verify_passes_and_reports_constants() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("v");
    let mut args = SHORT_VERIFY.to_vec();
    args.extend(["8", "--out", p(&dir)]);
    run_ok(&args);
    let report = read_json(&dir.join("verify_report.json"));
    assert_eq!(report["summary"]["passed"], true);
    assert_eq!(report["distance_reports"].as_array().unwrap().len(), 10);
    let c = &report["constants"];
    assert!((c["c1"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((c["c3"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    for r in report["identity_residuals"].as_array().unwrap() {
        assert!(r["exact_residual"].as_f64().unwrap() < 1e-9);
    }
    assert!(dir.join("resolved.conf").exists());
}

#[test]
fn verify_fails_on_injected_ratio() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("v");
    let mut args = SHORT_VERIFY.to_vec();
    args.extend(["8", "--inject-ratio", "100", "--out", p(&dir)]);
    let out = marginkd(&args);
    assert_eq!(out.status.code(), Some(1));
    let report = read_json(&dir.join("verify_report.json"));
    assert_eq!(report["summary"]["passed"], false);
}

#[test]
fn sweep_writes_one_row_per_metric_and_seed() {
    let tmp = TempDir::new().unwrap();
    let data = small_data(&tmp);
    let dir = tmp.path().join("sw");
    run_ok(&[
        "sweep", "--data", p(&data), "--lambdas", "0,0.05", "--seeds", "0,1", "--epochs", "2", "--out", p(&dir),
    ]);
    assert!(dir.join("resolved.conf").exists());
    assert!(dir.join("sweep_summary.csv").exists());
    let manifest = read_json(&dir.join("manifest.json"));
    let hash = manifest["config_hash"].as_str().unwrap().to_string();

    let mut reader = csv::Reader::from_path(dir.join("sweep_metrics.csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (exp, metric, seed, h) = (col("experiment"), col("metric"), col("seed"), col("config_hash"));
    let mut keys = std::collections::HashSet::new();
    for rec in reader.records() {
        let rec = rec.unwrap();
        assert_eq!(&rec[h], hash);
        assert!(keys.insert((rec[exp].to_string(), rec[metric].to_string(), rec[seed].to_string())));
    }
    assert!(!keys.is_empty());

    let report_dir = tmp.path().join("rep");
    run_ok(&["report", "--from", p(&dir), "--out", p(&report_dir)]);
    assert!(fs::read_to_string(report_dir.join("report.md")).unwrap().contains(&hash));
}

#[test]
fn sweep_without_control_lambda_exits_2() {
    let tmp = TempDir::new().unwrap();
    let data = small_data(&tmp);
    let out = marginkd(&["sweep", "--data", p(&data), "--lambdas", "0.01,0.02", "--seeds", "0", "--out", p(&tmp.path().join("sw"))]);
    assert_eq!(out.status.code(), Some(2));
}
