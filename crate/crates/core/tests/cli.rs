use std::path::Path;
use std::process::{Command, Output};

use narrative_seq::fixture::FIXTURE_FILE;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_narrative-seq")).args(args).output().unwrap()
}

fn fixture() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(FIXTURE_FILE)
        .to_string_lossy()
        .into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    for args in [&["--help"][..], &["--version"], &["compare", "--help"]] {
        let o = bin(args);
        assert_eq!(code(&o), 0, "{args:?}");
        assert!(!o.stdout.is_empty());
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&bin(&[])), 1);
    assert_eq!(code(&bin(&["frobnicate"])), 1);
    assert_eq!(code(&bin(&["train", "--data", "x"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "no_such_key = 3\n").unwrap();
    let o = bin(&["--config", bad.to_str().unwrap(), "ingest", "--data", &fixture()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn missing_data_exits_two() {
    let o = bin(&["ingest", "--data", "/nonexistent/corpus.json"]);
    assert_eq!(code(&o), 2);
    let o = bin(&["compare", "--data", "/nonexistent/corpus.json", "--out", "/tmp/unused"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn ingest_reports_distribution() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("dist.json");
    let o = bin(&["ingest", "--data", &fixture(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("200 completed"), "{text}");
    assert!(out.exists());
}

#[test]
fn preprocess_train_evaluate_round() {
    let dir = tempfile::tempdir().unwrap();
    let enc = dir.path().join("enc");
    let model = dir.path().join("gru");
    let eval = dir.path().join("eval");
    let p = |p: &Path| p.to_str().unwrap().to_owned();

    let o = bin(&["preprocess", "--data", &fixture(), "--out", &p(&enc), "--seq-len", "30"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let o = bin(&[
        "train", "--data", &p(&enc), "--model", "gru", "--out", &p(&model), "--epochs", "1",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["model.ckpt", "history.csv", "split.json"] {
        assert!(model.join(f).exists(), "{f}");
    }

    let o = bin(&[
        "evaluate",
        "--model-file",
        &p(&model.join("model.ckpt")),
        "--data",
        &p(&enc),
        "--out",
        &p(&eval),
        "--averaging",
        "macro",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(eval.join("results.txt")).unwrap();
    assert!(table.lines().any(|l| l.starts_with("GRU")), "{table}");
    assert!(table.contains("Majority baseline accuracy(%)"));
    let metrics: serde_json::Value =
        serde_json::from_slice(&std::fs::read(eval.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["averaging"], "macro");
}

#[test]
fn unknown_model_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let enc = dir.path().join("enc");
    let enc_s = enc.to_str().unwrap();
    assert_eq!(code(&bin(&["preprocess", "--data", &fixture(), "--out", enc_s])), 0);
    let o = bin(&["train", "--data", enc_s, "--model", "CNN", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}
