use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mvdec(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvdec"))
        .args(args)
        .current_dir(cwd)
        .env("MVDEC_THREADS", "0")
        .output()
        .expect("binary runs")
}

fn report(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn small_dataset(dir: &Path) {
    let out = mvdec(
        &["generate", "--out", "ds", "--n", "120", "--k", "3", "--dims", "5,3", "--seed", "2"],
        dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn preset_with_dims_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = mvdec(&["generate", "--out", "x", "--preset", "noisy-view", "--dims", "3,3"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!tmp.path().join("x").exists());
}

#[test]
fn generate_creates_nested_output_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let out = mvdec(&["-q", "generate", "--out", "a/b/c", "--preset", "noisy-view", "--format", "csv"], tmp.path());
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let manifest: Value = report(&tmp.path().join("a/b/c/manifest.json"));
    assert_eq!(manifest["n"], 1000);
}

#[test]
fn eval_prints_scores() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("truth.csv"), "label\n0\n0\n1\n1\n").unwrap();
    fs::write(d.join("swapped.csv"), "label\n1\n1\n0\n0\n").unwrap();
    fs::write(d.join("one_off.csv"), "label\n0\n0\n1\n0\n").unwrap();

    let scores = |pred: &str| -> Value {
        let out = mvdec(&["eval", pred, "truth.csv"], d);
        assert!(out.status.success());
        serde_json::from_slice(&out.stdout).unwrap()
    };
    for file in ["truth.csv", "swapped.csv"] {
        let s = scores(file);
        for key in ["acc", "nmi", "ari"] {
            assert!((s[key].as_f64().unwrap() - 1.0).abs() < 1e-12, "{file} {key}");
        }
    }
    assert_eq!(scores("one_off.csv")["acc"], 0.75);
}

#[test]
fn train_writes_report_and_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_dataset(d);
    let out = mvdec(
        &[
            "train",
            "--dataset",
            "ds",
            "--out",
            "run/nested",
            "--desk",
            "--pretrain-epochs",
            "0",
            "--batch-size",
            "32",
            "--max-rounds",
            "2",
        ],
        d,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = d.join("run/nested");
    let r = report(&run.join("report.json"));
    assert_eq!(r["incomplete"], false);
    assert_eq!(r["config"]["k"], 3, "k comes from the labels");
    assert_eq!(r["config"]["pretrain_epochs"], 0);
    for f in ["labels.csv", "view_labels.csv", "models.json", "embeddings/view0.csv", "embeddings/global.csv"] {
        assert!(run.join(f).exists(), "{f}");
    }

    let out = mvdec(
        &["export-embeddings", "--dataset", "ds", "--models", "run/nested/models.json", "--out", "emb"],
        d,
    );
    assert!(out.status.success());
    assert_eq!(
        fs::read_to_string(d.join("emb/view1.csv")).unwrap(),
        fs::read_to_string(run.join("embeddings/view1.csv")).unwrap()
    );
}

#[test]
fn config_file_is_strict_and_flags_override_it() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_dataset(d);
    fs::write(d.join("typo.json"), r#"{"dataset": "ds", "out": "r", "trainig": {}}"#).unwrap();
    let out = mvdec(&["train", "--config", "typo.json"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trainig"));

    let cfg = r#"{"dataset": "ds", "out": "r", "training": {"k": 2, "pretrain_epochs": 1, "batch_size": 32,
        "hidden": [16, 16], "finetune_batches_per_round": 2, "max_rounds": 1, "gamma": 0.5}}"#;
    fs::write(d.join("ok.json"), cfg).unwrap();
    let out = mvdec(&["-q", "train", "--config", "ok.json", "--gamma", "0.25"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&d.join("r/report.json"));
    assert_eq!(r["config"]["k"], 2, "k set in the file is kept");
    assert_eq!(r["config"]["gamma"], 0.25);
}

#[test]
fn failures_leave_an_incomplete_report() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_dataset(d);
    let out = mvdec(&["train", "--dataset", "ds", "--out", "bad_k", "--k", "500"], d);
    assert_eq!(out.status.code(), Some(1));
    let r = report(&d.join("bad_k/report.json"));
    assert_eq!(r["incomplete"], true);
    assert!(r["warnings"][0].as_str().unwrap().contains("500"));

    let out = mvdec(&["train", "--dataset", "missing", "--out", "no_data"], d);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(&d.join("no_data/report.json"))["incomplete"], true);
}
