use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn famseq(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_famseq")).args(args).current_dir(cwd).output().unwrap()
}

fn recipe() -> Value {
    json!({
        "widths": vec![1; 12],
        "label_space": "Mouse5",
        "counts": [20, 20, 20, 20, 20],
        "separation": 1.5,
        "sigma": 1.0,
        "seed": 4
    })
}

fn write(dir: &Path, name: &str, v: &Value) -> String {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p.display().to_string()
}

fn rf_config() -> Value {
    json!({
        "preset": "rf_baseline",
        "n_seeds": 2,
        "data": {"kind": "synth", "recipe": recipe()},
        "overrides": {"model": {"forest": {"n_trees": 10}}}
    })
}

#[test]
fn validate_accepts_a_good_config() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "c.json", &rf_config());
    let out = famseq(&["validate", &cfg], d.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(out.stdout.is_empty());
}

#[test]
fn validate_lists_every_problem() {
    let d = tempfile::tempdir().unwrap();
    let cfg = json!({
        "preset": "bilstm",
        "protocol": "holdout_10x",
        "data": {"kind": "files", "dataset": "missing.json"},
        "overrides": {"model": {"no_such_knob": 1}}
    });
    let path = write(d.path(), "c.json", &cfg);
    let out = famseq(&["validate", &path], d.path());
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("file_not_found"), "{text}");
    assert!(text.contains("invalid_override"), "{text}");
}

#[test]
fn run_writes_reports_and_report_rerenders_them() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "c.json", &rf_config());
    let out = famseq(&["run", &cfg, "--out", "res"], d.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let res = d.path().join("res");
    for f in ["metrics.json", "confusion.csv", "confusion.svg", "runs.csv", "resolved_config.json"] {
        assert!(res.join(f).is_file(), "missing {f}");
    }
    assert!(String::from_utf8_lossy(&out.stdout).contains("macro_f1="));

    let again = famseq(&["report", "res/metrics.json", "--out", "again"], d.path());
    assert!(again.status.success());
    for f in ["confusion.csv", "confusion.svg", "metrics.json"] {
        assert_eq!(std::fs::read(res.join(f)).unwrap(), std::fs::read(d.path().join("again").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn gen_writes_one_dataset_per_species() {
    let d = tempfile::tempdir().unwrap();
    let mut r = recipe();
    r["target"] = json!({"counts": [10, 10, 10, 10], "shift_scale": 0.2, "shift_seed": 1});
    let path = write(d.path(), "r.json", &r);
    let out = famseq(&["gen", &path, "--out", "data"], d.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.path().join("data/mouse.json").is_file());
    assert!(d.path().join("data/human.json").is_file());
}

#[test]
fn failures_print_one_classified_line_and_exit_2() {
    let d = tempfile::tempdir().unwrap();
    let out = famseq(&["run", "absent.json"], d.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error["), "{err}");

    let cfg = write(d.path(), "c.json", &rf_config());
    let out = famseq(&["run", &cfg, "--preset", "nope"], d.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[config]"));
}
