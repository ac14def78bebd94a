mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

use curate_server::cli::{run, RunOptions};

fn iris_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/iris.csv")
}

fn curate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curate"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn script(steps: Value) -> Value {
    json!({
        "schema_version": 1,
        "dataset": { "label_column": "class", "path": iris_path() },
        "config": common::fast_config(),
        "steps": steps,
    })
}

fn write(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

#[test]
fn empty_script_yields_baseline_only_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(dir.path(), "empty.json", &script(json!([])));
    let out = dir.path().join("out");
    let o = curate(&["run", "--script", s.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("step,kind,train_size,balanced_accuracy_train"));
    assert!(lines[1].starts_with("0,train,112,"));
    let sankey: Value = serde_json::from_str(&std::fs::read_to_string(out.join("sankey.json")).unwrap()).unwrap();
    assert_eq!(sankey["us_total"], 0);
    assert_eq!(sankey["train_size"], 112);
}

#[test]
fn wrong_dataset_hash_fails_with_its_code() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = script(json!([]));
    v["dataset"]["hash"] = json!("00ff");
    let s = write(dir.path(), "bad.json", &v);
    let out = dir.path().join("out");
    let o = curate(&["run", "--script", s.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("dataset_mismatch"));
    assert!(!out.join("session.json").exists());
}

#[test]
fn unknown_step_kind_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(dir.path(), "bad.json", &script(json!([{ "kind": "train" }, { "kind": "shuffle" }])));
    let o = curate(&["run", "--script", s.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("invalid_schema") && err.contains("steps[1].kind"), "{err}");
}

#[test]
fn failing_step_reports_its_index() {
    let dir = tempfile::tempdir().unwrap();
    let steps = json!([
        { "kind": "select_projection", "n_neighbors": 7 },
        { "kind": "undersample", "request": { "algorithm": "ncr", "threshold": 2.0 } },
    ]);
    let s = write(dir.path(), "s.json", &script(steps));
    let opts = RunOptions {
        script: s,
        out: dir.path().join("o"),
        seed_override: None,
        data: None,
    };
    let e = run(&opts).unwrap_err();
    assert_eq!(e.code(), "invalid_threshold");
    assert_eq!(e.step(), Some(1));
}

#[test]
fn replaying_an_export_reproduces_it() {
    let dir = tempfile::tempdir().unwrap();
    let steps = json!([
        { "kind": "undersample", "request": { "algorithm": "ncr" }, "acceptance": { "filter": { "types": ["rare", "outlier"] } } },
        { "kind": "toggle_types", "types": ["safe", "borderline"] },
        { "kind": "oversample", "request": { "algorithm": "smote", "seed": 3 } },
    ]);
    let s = write(dir.path(), "s.json", &script(steps));
    let first = run(&RunOptions {
        script: s,
        out: dir.path().join("a"),
        seed_override: None,
        data: None,
    })
    .unwrap();
    assert_eq!(first.steps().len(), 4);
    let exported = std::fs::read_to_string(dir.path().join("a/session.json")).unwrap();

    let out_b = dir.path().join("b");
    let o = curate(&[
        "run",
        "--script",
        dir.path().join("a/session.json").to_str().unwrap(),
        "--out",
        out_b.to_str().unwrap(),
        "--data",
        iris_path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(out_b.join("session.json")).unwrap(), exported);
    assert_eq!(
        std::fs::read_to_string(out_b.join("metrics.csv")).unwrap(),
        std::fs::read_to_string(dir.path().join("a/metrics.csv")).unwrap()
    );
}

#[test]
fn seed_override_replaces_every_seed() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(dir.path(), "s.json", &script(json!([])));
    let session = run(&RunOptions {
        script: s,
        out: dir.path().join("o"),
        seed_override: Some(9),
        data: None,
    })
    .unwrap();
    let c = session.config();
    assert_eq!((c.split_seed, c.model.seed, c.projection.seed), (9, 9, 9));
    assert_eq!(session.split().seed, 9);
}

#[test]
fn checked_in_walkthrough_script_parses() {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scripts/iris_walkthrough.json");
    let file = curate_core::session::SessionFile::parse(&std::fs::read_to_string(p).unwrap()).unwrap();
    let kinds: Vec<&str> = file.steps.iter().map(|s| s.action.kind()).collect();
    assert_eq!(kinds, ["undersample", "undersample", "oversample"]);
}
