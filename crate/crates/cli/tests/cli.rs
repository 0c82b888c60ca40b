use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn shotface(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shotface"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = shotface(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Synthetic dataset, index and mock embedding cache.
fn prepared(extra: &[&str]) -> TempDir {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let mut synth = vec!["synth", "--out", "s"];
    synth.extend_from_slice(extra);
    ok(d, &synth);
    ok(d, &["ingest", "s/dataset", "--out", "index.toml"]);
    ok(d, &["embed", "--index", "index.toml", "--mock", "--out", "cache.bin"]);
    tmp
}

fn finetuned(extra: &[&str]) -> TempDir {
    let tmp = prepared(extra);
    ok(
        tmp.path(),
        &["finetune", "--cache", "cache.bin", "--prompts", "s/prompts.pem", "--lr", "5e-3", "--out", "g.gal"],
    );
    tmp
}

fn csv_rows(path: PathBuf) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn ingest_summary_and_rerun_is_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--out", "s", "--known", "3", "--images", "10", "--frames", "2"]);
    let out = ok(d, &["ingest", "s/dataset", "--out", "a.toml"]);
    assert!(out.contains("3 identities, 30 images, 24 train / 6 test"), "{out}");
    assert!(out.contains("person_01"));
    ok(d, &["ingest", "s/dataset", "--out", "b.toml"]);
    assert_eq!(fs::read(d.join("a.toml")).unwrap(), fs::read(d.join("b.toml")).unwrap());
}

#[test]
fn missing_root_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = shotface(tmp.path(), &["ingest", "nowhere", "--out", "i.toml"]);
    assert_eq!(code(&out), 2);
    assert!(!tmp.path().join("i.toml").exists());
}

#[test]
fn empty_root_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    fs::create_dir(tmp.path().join("empty")).unwrap();
    let out = shotface(tmp.path(), &["ingest", "empty", "--out", "i.toml"]);
    assert_eq!(code(&out), 4);
}

#[test]
fn mock_embedding_is_deterministic() {
    let tmp = prepared(&["--known", "3", "--images", "5", "--frames", "2"]);
    let d = tmp.path();
    ok(d, &["embed", "--index", "index.toml", "--mock", "--out", "again.bin"]);
    assert_eq!(fs::read(d.join("cache.bin")).unwrap(), fs::read(d.join("again.bin")).unwrap());
}

#[test]
fn manifest_backends() {
    let tmp = prepared(&["--known", "3", "--images", "5", "--frames", "2"]);
    let d = tmp.path();
    fs::write(d.join("broken.onnx"), b"not a model").unwrap();
    fs::write(d.join("onnx.toml"), "backend = \"onnx\"\nmodel = \"broken.onnx\"\ndim = 1024\n").unwrap();
    let out = shotface(d, &["embed", "--index", "index.toml", "--manifest", "onnx.toml", "--out", "x.bin"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));

    fs::write(
        d.join("mock.toml"),
        "backend = \"mock\"\ndim = 32\n\n[mock]\nseed = 42\ndim = 32\ncenters = 12\nseparation_deg = 60.0\nnoise_deg = 5.0\n",
    )
    .unwrap();
    let out = ok(d, &["embed", "--index", "index.toml", "--manifest", "mock.toml", "--out", "m.bin"]);
    assert!(out.contains("of dimension 32"), "{out}");
}

#[test]
fn finetune_writes_one_history_row_per_step() {
    let tmp = finetuned(&[]);
    let d = tmp.path();
    assert_eq!(csv_rows(d.join("g.history.csv")), 15);
    ok(
        d,
        &["finetune", "--cache", "cache.bin", "--epochs", "2", "--out", "g2.gal", "--history", "h2.csv"],
    );
    assert_eq!(csv_rows(d.join("h2.csv")), 30);
}

#[test]
fn template_without_placeholder_is_rejected() {
    let tmp = prepared(&["--known", "3", "--images", "5", "--frames", "2"]);
    let out = shotface(
        tmp.path(),
        &["finetune", "--cache", "cache.bin", "--template", "a photo", "--out", "g.gal"],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn bad_hyperparameters_are_usage_errors() {
    let tmp = prepared(&["--known", "3", "--images", "5", "--frames", "2"]);
    let d = tmp.path();
    let out = shotface(d, &["finetune", "--cache", "cache.bin", "--batch-size", "0", "--out", "g.gal"]);
    assert_eq!(code(&out), 2);
    fs::write(d.join("hp.toml"), "learning_rate = 1.0\n").unwrap();
    let out = shotface(d, &["--config", "hp.toml", "finetune", "--cache", "cache.bin", "--out", "g.gal"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn evaluate_uses_the_default_threshold_and_reports() {
    let tmp = finetuned(&[]);
    let d = tmp.path();
    let args = ["evaluate", "--gallery", "g.gal", "--sessions", "s/sessions", "--mock", "--cache", "cache.bin"];
    let default = ok(d, &[&args[..], &["--out", "a.csv"]].concat());
    ok(d, &[&args[..], &["--threshold", "0.8", "--out", "b.csv"]].concat());
    assert_eq!(fs::read(d.join("a.csv")).unwrap(), fs::read(d.join("b.csv")).unwrap());
    assert!(default.contains("TP=10 TN=2 FP=0 FN=0"), "{default}");
    assert!(default.contains("stranger_00"));
    assert!(fs::read_to_string(d.join("a.csv")).unwrap().contains(",0.8"));
}

#[test]
fn raising_the_threshold_never_accepts_more_sessions() {
    let tmp = finetuned(&[]);
    let d = tmp.path();
    let mut previous = usize::MAX;
    for t in ["0.3", "0.6", "0.8", "0.95", "0.999"] {
        let out = ok(
            d,
            &["evaluate", "--gallery", "g.gal", "--sessions", "s/sessions", "--mock", "--threshold", t, "--out", "r.csv"],
        );
        let accepted = out
            .lines()
            .filter(|l| l.contains("decision=") && !l.contains("decision=UNKNOWN"))
            .count();
        assert!(accepted <= previous, "threshold {t}: {accepted} > {previous}");
        previous = accepted;
    }
    let out = shotface(
        d,
        &["evaluate", "--gallery", "g.gal", "--sessions", "s/sessions", "--mock", "--threshold", "1.5", "--out", "r.csv"],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn diagnose_report_and_predict() {
    let tmp = finetuned(&[]);
    let d = tmp.path();
    let diag = ok(d, &["diagnose", "--cache", "cache.bin"]);
    assert!(diag.to_lowercase().contains("mean"), "{diag}");

    ok(d, &["evaluate", "--gallery", "g.gal", "--sessions", "s/sessions", "--mock", "--model", "a", "--out", "a.csv"]);
    ok(
        d,
        &["evaluate", "--gallery", "g.gal", "--sessions", "s/sessions", "--mock", "--model", "b", "--threshold", "0.99", "--out", "b.csv"],
    );
    let table = ok(d, &["report", "a.csv", "b.csv", "--out", "all.csv"]);
    assert!(table.contains("**"), "{table}");
    assert_eq!(csv_rows(d.join("all.csv")), 2);

    let line = ok(d, &["predict", "s/sessions/person_03/frame_00.png", "--gallery", "g.gal", "--mock"]);
    assert!(line.starts_with("person_03 "), "{line}");
    let line = ok(d, &["predict", "s/sessions/stranger_00/frame_00.png", "--gallery", "g.gal", "--mock"]);
    assert!(line.starts_with("UNKNOWN "), "{line}");
}
