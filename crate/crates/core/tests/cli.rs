mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{bin, files_below};
use serde_json::Value;

fn glassbox(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin()).args(args).current_dir(dir).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = glassbox(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).expect("readable")).expect("json")
}

/// Synth, cluster and ingest into `dir`.
fn prepare(dir: &Path) {
    ok(dir, &["synth", "--out", "data", "--seed", "0", "--n-users", "12000"]);
    ok(dir, &["cluster", "--data", "data", "--out", "clusters"]);
    ok(dir, &["ingest", "--data", "data", "--clusters", "clusters/clusters.json", "--out", "frames"]);
}

#[test]
fn pipeline_artifacts_and_refusals() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepare(dir);

    let elbow = json(&dir.join("clusters/elbow.json"));
    assert_eq!(elbow["metadata"]["selected_k"], 4);
    assert_eq!(elbow["metadata"]["degenerate"], false);
    let summary = json(&dir.join("frames/summary.json"));
    assert!(summary.to_string().contains("feature_hash"));

    ok(dir, &["train", "--frame", "frames/sales.csv", "--out", "model", "--rounds", "20"]);

    // Rerunning from the snapshot reproduces the model byte for byte.
    ok(dir, &["train", "--frame", "frames/sales.csv", "--out", "again", "--config", "model/config.json"]);
    assert_eq!(std::fs::read(dir.join("model/model.json")).unwrap(), std::fs::read(dir.join("again/model.json")).unwrap());
    assert_eq!(json(&dir.join("again/config.json"))["params"]["hyper"]["gbdt"]["num_rounds"], 20);

    // A model trained on one schema refuses a frame with another.
    let out = glassbox(dir, &["explain", "--model", "model/model.json", "--frame", "frames/choice.csv", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(!dir.join("x/shap_values.csv").exists());

    ok(dir, &[
        "explain", "--model", "model/model.json", "--frame", "frames/sales.csv", "--out", "explain",
        "--sample-size", "200", "--h-sample", "50", "--set", "top_features=1",
    ]);
    for f in ["shap_values.csv", "importance.csv", "importance.json", "explain_report.json"] {
        assert!(dir.join("explain").join(f).exists(), "missing {f}");
    }

    ok(dir, &["plot", "--input", "explain", "--out", "svg"]);
    let svgs: Vec<_> = files_below(&dir.join("svg"));
    assert!(!svgs.is_empty());
    for f in &svgs {
        assert_eq!(f.extension().and_then(|e| e.to_str()), Some("svg"));
        assert!(std::fs::read_to_string(dir.join("svg").join(f)).unwrap().starts_with("<svg"));
    }

    ok(dir, &["bench", "--frame", "frames/choice.csv", "--out", "bench", "--models", "gbdt,nb", "--rounds", "10"]);
    let report = json(&dir.join("bench/bench_report.json"));
    assert_eq!(report["metric"], "macro_precision");
}

#[test]
fn missing_inputs_are_data_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = glassbox(dir, &["ingest", "--data", "nowhere", "--out", "frames"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("glassbox synth"), "{}", stderr(&out));

    let out = glassbox(dir, &["train", "--frame", "frames/sales.csv", "--out", "m"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("glassbox ingest"), "{}", stderr(&out));
}

#[test]
fn validation_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cases: [&[&str]; 4] = [
        &["synth", "--out", "d"],
        &["synth", "--out", "d", "--seed", "1", "--set", "no_such_key=3"],
        &["synth", "--out", "d", "--seed", "1", "--buyer-fraction", "1.5"],
        &["train", "--out", "m"],
    ];
    for args in cases {
        let out = glassbox(dir, args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
    }
    let out = Command::new(bin())
        .args(["synth", "--out", "d", "--seed", "1"])
        .current_dir(dir)
        .env("GLASSBOX_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
