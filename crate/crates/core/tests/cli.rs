use std::path::Path;
use std::process::{Command, Output};

fn helmfno(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_helmfno")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn no_arguments_prints_help_and_fails() {
    let out = helmfno(&[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_family_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = helmfno(&["gen-velocity", "--family", "flat-Z", "--seed", "1", "--out", p(&dir.path().join("v.json"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("flat-Z"));
}

#[test]
fn gen_velocity_writes_models() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.json");
    let out = helmfno(&["gen-velocity", "--family", "style-b", "--count", "3", "--seed", "4", "--out", p(&path)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let models = v.as_array().unwrap();
    assert_eq!(models.len(), 3);
    assert_eq!(models[0]["values"].as_array().unwrap().len(), 70 * 70);
}

#[test]
fn band_syntax_is_checked() {
    let dir = tempfile::tempdir().unwrap();
    let out = helmfno(&["reconstruct", "--wavefield", p(dir.path()), "--band", "11-20", "--out", p(&dir.path().join("r"))]);
    assert!(!out.status.success());
}

#[test]
fn train_eval_and_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    let out = helmfno(&["build-dataset", "--family", "flat-A", "--count", "3", "--freqs", "10", "--seed", "2", "--out", p(&data)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = helmfno(&[
        "train", "--data", p(&data), "--test-count", "1", "--width", "6", "--modes", "3", "--epochs", "2", "--batch", "2", "--seed", "1", "--out", p(&run),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["model.ckpt", "history.json", "report.json", "report.csv"] {
        assert!(run.join(f).exists(), "{f}");
    }

    let out = helmfno(&["eval", "--model", p(&run.join("model.ckpt")), "--data", p(&data)]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["samples"], 3);
    assert!(v["mse"].as_f64().unwrap() > 0.0);

    let out = helmfno(&["report", "--in", p(&run), "--format", "csv"]);
    assert!(out.status.success());
    let csv = String::from_utf8_lossy(&out.stdout);
    assert!(csv.contains("train_seconds") && csv.contains("test_mse"));
}

#[test]
fn bench_reports_solver_slope() {
    let out = helmfno(&["bench", "--sizes", "20,30", "--reps", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = String::from_utf8_lossy(&out.stdout);
    assert!(s.contains("bench-solver,n20,per_instance_s"));
    assert!(s.contains("loglog_slope"));
}
