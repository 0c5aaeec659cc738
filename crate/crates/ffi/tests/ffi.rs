use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use narrative_seq::checkpoint::save_checkpoint;
use narrative_seq::dataset::{preprocess_records, read_pipeline, write_encoded_dir, PreprocessOptions};
use narrative_seq::fixture::fixture_corpus;
use narrative_seq::nn::{predict_class, predict_probs, ModelParams};
use narrative_seq::zoo::{zoo_spec, ZooWidths};
use narrative_seq_ffi::*;

struct Fixture {
    _dir: tempfile::TempDir,
    encoded: PathBuf,
    checkpoint: PathBuf,
}

fn small_widths() -> ZooWidths {
    ZooWidths {
        embedding_dim: 6,
        hidden_units: 5,
        dense_hidden_units: 4,
        ..Default::default()
    }
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let encoded = dir.path().join("enc");
    let opts = PreprocessOptions {
        seq_len: 40,
        ..Default::default()
    };
    let pre = preprocess_records(&fixture_corpus(), &opts);
    write_encoded_dir(&encoded, &pre).unwrap();
    let fp = read_pipeline(&encoded).unwrap().vocab_fingerprint;
    let spec = zoo_spec("GRU-BLSTM", &small_widths()).unwrap();
    let params = ModelParams::init(&spec, pre.vocab.len(), 9).unwrap();
    let checkpoint = dir.path().join("model.ckpt");
    save_checkpoint(&params, &spec, &fp, &checkpoint).unwrap();
    Fixture {
        _dir: dir,
        encoded,
        checkpoint,
    }
}

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = ns_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn open(f: &Fixture) -> *mut NsClassifier {
    let mut c = ptr::null_mut();
    let st = unsafe { ns_classifier_open(cstr(&f.checkpoint).as_ptr(), cstr(&f.encoded).as_ptr(), &mut c) };
    assert_eq!(st, NsStatus::Ok);
    assert!(ns_last_error_message().is_null());
    c
}

#[test]
fn version_matches_package() {
    let v = unsafe { CStr::from_ptr(ns_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn text_prediction_matches_library_pipeline() {
    let f = fixture();
    let c = open(&f);
    unsafe {
        assert_eq!(CStr::from_ptr(ns_classifier_model_name(c)).to_str().unwrap(), "GRU-BLSTM");
        assert_eq!(ns_classifier_seq_len(c), 40);
    }
    let pipeline = read_pipeline(&f.encoded).unwrap();
    assert_eq!(unsafe { ns_classifier_vocab_size(c) }, pipeline.vocab.len());
    let spec = zoo_spec("GRU-BLSTM", &small_widths()).unwrap();
    let params = ModelParams::init(&spec, pipeline.vocab.len(), 9).unwrap();

    for rec in fixture_corpus().iter().take(25) {
        let expected = predict_probs(&pipeline.encode(&rec.narrative), &spec, &params).unwrap();
        let text = CString::new(rec.narrative.as_str()).unwrap();
        let (mut probs, mut label) = ([0.0; 4], -1);
        let st = unsafe { ns_classifier_predict_text(c, text.as_ptr(), probs.as_mut_ptr(), &mut label) };
        assert_eq!(st, NsStatus::Ok);
        assert_eq!(probs.map(f64::to_bits), expected.map(f64::to_bits));
        assert_eq!(label, predict_class(&expected).code() as i32);

        let ids = pipeline.encode(&rec.narrative).ids;
        let mut probs2 = [0.0; 4];
        let st = unsafe { ns_classifier_predict_ids(c, ids.as_ptr(), ids.len(), probs2.as_mut_ptr(), ptr::null_mut()) };
        assert_eq!(st, NsStatus::Ok);
        assert_eq!(probs, probs2);
    }
    unsafe { ns_classifier_free(c) };
}

#[test]
fn classifier_errors_are_reported() {
    let f = fixture();
    let mut c = ptr::null_mut();
    let missing = CString::new("/nonexistent/model.ckpt").unwrap();
    let st = unsafe { ns_classifier_open(missing.as_ptr(), cstr(&f.encoded).as_ptr(), &mut c) };
    assert_eq!(st, NsStatus::Io);
    assert!(c.is_null());
    assert!(last_error().contains("nonexistent"));

    let st = unsafe { ns_classifier_open(cstr(&f.checkpoint).as_ptr(), missing.as_ptr(), &mut c) };
    assert_eq!(st, NsStatus::Data);

    // A checkpoint trained against another vocabulary is refused.
    let other = tempfile::tempdir().unwrap();
    let pre = preprocess_records(&fixture_corpus()[..50], &PreprocessOptions::default());
    write_encoded_dir(other.path(), &pre).unwrap();
    let st = unsafe { ns_classifier_open(cstr(&f.checkpoint).as_ptr(), cstr(other.path()).as_ptr(), &mut c) };
    assert_eq!(st, NsStatus::Checkpoint);
    assert!(last_error().contains("fingerprint"), "{}", last_error());

    let st = unsafe { ns_classifier_open(ptr::null(), cstr(&f.encoded).as_ptr(), &mut c) };
    assert_eq!(st, NsStatus::NullArgument);

    let c = open(&f);
    let vocab = unsafe { ns_classifier_vocab_size(c) } as u32;
    let ids = [2, vocab];
    let st = unsafe { ns_classifier_predict_ids(c, ids.as_ptr(), 2, ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(st, NsStatus::InvalidArgument);
    let st = unsafe { ns_classifier_predict_ids(c, ptr::null(), 3, ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(st, NsStatus::NullArgument);
    let bad_utf8 = [0xffu8, 0xfe, 0];
    let st = unsafe { ns_classifier_predict_text(c, bad_utf8.as_ptr().cast(), ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(st, NsStatus::InvalidUtf8);
    let st = unsafe { ns_classifier_predict_ids(ptr::null(), ids.as_ptr(), 1, ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(st, NsStatus::NullArgument);
    unsafe {
        ns_classifier_free(c);
        ns_classifier_free(ptr::null_mut());
    }
}

#[test]
fn metrics_for_four_pairs() {
    let preds = [0, 1, 1, 2];
    let labels = [0, 1, 2, 2];
    let mut m = NsMetrics::default();
    let st = unsafe { ns_compute_metrics(preds.as_ptr(), labels.as_ptr(), 4, NS_AVERAGING_WEIGHTED, &mut m) };
    assert_eq!(st, NsStatus::Ok);
    assert_eq!(m.accuracy, 0.75);
    assert_eq!(m.class_support, [1, 1, 2, 0]);
    assert_eq!(m.class_precision, [1.0, 0.5, 1.0, 0.0]);
    assert_eq!(m.class_recall, [1.0, 1.0, 0.5, 0.0]);
    assert_eq!(m.recall, 0.75);
    assert_eq!(m.confusion[..12], [1, 0, 0, 0, 0, 1, 0, 0, 0, 1, 1, 0]);

    let st = unsafe { ns_compute_metrics(preds.as_ptr(), labels.as_ptr(), 4, NS_AVERAGING_MACRO, &mut m) };
    assert_eq!(st, NsStatus::Ok);
    assert_eq!(m.recall, 2.5 / 4.0);

    let bad = [0, 4, 1, 1];
    let st = unsafe { ns_compute_metrics(bad.as_ptr(), labels.as_ptr(), 4, NS_AVERAGING_MACRO, &mut m) };
    assert_eq!(st, NsStatus::InvalidArgument);
    let st = unsafe { ns_compute_metrics(preds.as_ptr(), labels.as_ptr(), 4, 7, &mut m) };
    assert_eq!(st, NsStatus::InvalidArgument);
    let st = unsafe { ns_compute_metrics(preds.as_ptr(), labels.as_ptr(), 0, NS_AVERAGING_MACRO, &mut m) };
    assert_eq!(st, NsStatus::InvalidArgument);
}

#[test]
fn text_helpers_match_core() {
    let input = "The Aircraft's LEFT wing-tip struck 2 poles, then landed.";
    let text = CString::new(input).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { ns_normalize_text(text.as_ptr(), &mut out) }, NsStatus::Ok);
    let got = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_owned();
    unsafe { ns_string_free(out) };
    assert_eq!(got, narrative_seq::text::normalize_text(input));

    assert_eq!(unsafe { ns_preprocess_text(text.as_ptr(), &mut out) }, NsStatus::Ok);
    let got = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_owned();
    unsafe { ns_string_free(out) };
    let expected = narrative_seq::text::preprocess(input, &narrative_seq::text::Stoplist::english());
    assert_eq!(got, expected.join(" "));

    assert_eq!(unsafe { ns_normalize_text(ptr::null(), &mut out) }, NsStatus::NullArgument);
    assert!(out.is_null());
    unsafe { ns_string_free(ptr::null_mut()) };
}

/// Directory holding the built cdylib: target/<profile>/ (the test binary
/// lives in target/<profile>/deps/).
fn lib_dir() -> PathBuf {
    std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_header() {
    let lib = lib_dir();
    assert!(
        lib.join("libnarrative_seq_ffi.so").exists() || lib.join("libnarrative_seq_ffi.dylib").exists(),
        "cdylib not found in {}",
        lib.display()
    );
    let f = fixture();
    let out = tempfile::tempdir().unwrap();
    let exe = out.path().join("smoke");
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("smoke.c");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .arg(&src)
        .arg(format!("-I{}", include.display()))
        .arg(format!("-L{}", lib.display()))
        .arg("-lnarrative_seq_ffi")
        .status()
        .unwrap();
    assert!(status.success());
    let run = Command::new(&exe)
        .arg(&f.checkpoint)
        .arg(&f.encoded)
        .env("LD_LIBRARY_PATH", &lib)
        .env("DYLD_LIBRARY_PATH", &lib)
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "{stdout}{}", String::from_utf8_lossy(&run.stderr));
    assert!(stdout.contains("model GRU-BLSTM"), "{stdout}");
    assert!(stdout.contains("accuracy 0.75"), "{stdout}");
}
