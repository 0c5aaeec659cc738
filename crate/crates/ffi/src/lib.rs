//! C interface to trained classifiers, the evaluation metrics and the text
//! pipeline.
//!
//! Every fallible function returns an [`NsStatus`]. On failure a message is
//! kept per thread and can be read with [`ns_last_error_message`]. Strings
//! returned through out-pointers are owned by the caller and must be released
//! with [`ns_string_free`]; classifiers with [`ns_classifier_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use narrative_seq::checkpoint::{load_checkpoint, CheckpointError};
use narrative_seq::dataset::{read_pipeline, TextPipeline};
use narrative_seq::eval::{compute_metrics, confusion_matrix, Averaging};
use narrative_seq::nn::{predict_class, predict_probs, ModelParams, ModelSpec};
use narrative_seq::text::{normalize_text, preprocess, Stoplist};
use narrative_seq::vocab::EncodedSequence;
use narrative_seq::DamageLabel;

pub const NS_NUM_CLASSES: usize = 4;
pub const NS_CONFUSION_LEN: usize = 16;
pub const NS_AVERAGING_MACRO: u32 = 0;
pub const NS_AVERAGING_WEIGHTED: u32 = 1;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Checkpoint = 5,
    Data = 6,
    Panic = 7,
}

/// Aggregate and per-class metrics. Per-class arrays are indexed by label
/// code (0 Destroyed, 1 Substantial, 2 Minor, 3 None); `confusion` is
/// row-major `[true][predicted]`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NsMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub class_precision: [f64; NS_NUM_CLASSES],
    pub class_recall: [f64; NS_NUM_CLASSES],
    pub class_f1: [f64; NS_NUM_CLASSES],
    pub class_support: [u64; NS_NUM_CLASSES],
    pub confusion: [u64; NS_CONFUSION_LEN],
}

/// A checkpoint paired with the text pipeline it was trained on.
pub struct NsClassifier {
    spec: ModelSpec,
    params: ModelParams,
    pipeline: TextPipeline,
    name: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

type FfiResult<T> = Result<T, (NsStatus, String)>;

fn guard(f: impl FnOnce() -> FfiResult<()>) -> NsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            NsStatus::Panic
        }
    }
}

fn null(what: &str) -> (NsStatus, String) {
    (NsStatus::NullArgument, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (NsStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> FfiResult<&'a [T]> {
    match (p.is_null(), len) {
        (_, 0) => Ok(&[]),
        (true, _) => Err(null(what)),
        (false, n) => Ok(std::slice::from_raw_parts(p, n)),
    }
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("NUL bytes removed").into_raw()
}

unsafe fn write_prediction(probs: [f64; NS_NUM_CLASSES], out_probs: *mut f64, out_label: *mut i32) {
    if !out_probs.is_null() {
        ptr::copy_nonoverlapping(probs.as_ptr(), out_probs, NS_NUM_CLASSES);
    }
    if !out_label.is_null() {
        *out_label = predict_class(&probs).code() as i32;
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ns_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn ns_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Loads a checkpoint and the encoded directory (its `vocab.json` and
/// `pipeline.json`) it was trained on. Fails with `NS_STATUS_CHECKPOINT` if
/// the vocabulary fingerprints differ.
///
/// # Safety
/// Paths must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ns_classifier_open(
    checkpoint_path: *const c_char,
    encoded_dir: *const c_char,
    out: *mut *mut NsClassifier,
) -> NsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let ckpt = PathBuf::from(read_str(checkpoint_path, "checkpoint_path")?);
        let dir = PathBuf::from(read_str(encoded_dir, "encoded_dir")?);
        let pipeline = read_pipeline(&dir).map_err(|e| (NsStatus::Data, e.to_string()))?;
        let ck = load_checkpoint(&ckpt, Some(&pipeline.vocab_fingerprint)).map_err(|e| {
            let status = match e {
                CheckpointError::Io { .. } => NsStatus::Io,
                _ => NsStatus::Checkpoint,
            };
            (status, e.to_string())
        })?;
        let name = CString::new(ck.spec.name.replace('\0', " ")).expect("NUL bytes removed");
        *out = Box::into_raw(Box::new(NsClassifier {
            spec: ck.spec,
            params: ck.params,
            pipeline,
            name,
        }));
        Ok(())
    })
}

/// Releases a classifier. NULL is ignored.
///
/// # Safety
/// `c` must come from [`ns_classifier_open`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ns_classifier_free(c: *mut NsClassifier) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Model name (e.g. "GRU-BLSTM"), owned by the classifier.
///
/// # Safety
/// `c` must be a live classifier or NULL.
#[no_mangle]
pub unsafe extern "C" fn ns_classifier_model_name(c: *const NsClassifier) -> *const c_char {
    c.as_ref().map_or(ptr::null(), |c| c.name.as_ptr())
}

/// Sequence length used when encoding text; 0 for NULL.
///
/// # Safety
/// `c` must be a live classifier or NULL.
#[no_mangle]
pub unsafe extern "C" fn ns_classifier_seq_len(c: *const NsClassifier) -> usize {
    c.as_ref().map_or(0, |c| c.pipeline.meta.seq_len)
}

/// Vocabulary size including the padding and OOV ids; 0 for NULL.
///
/// # Safety
/// `c` must be a live classifier or NULL.
#[no_mangle]
pub unsafe extern "C" fn ns_classifier_vocab_size(c: *const NsClassifier) -> usize {
    c.as_ref().map_or(0, |c| c.pipeline.vocab.len())
}

/// Class probabilities for an already encoded id sequence. Ids are used as
/// given (no padding or truncation). `out_probs` receives 4 values and
/// `out_label` the argmax code; either may be NULL.
///
/// # Safety
/// `ids` must point to `len` readable values; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn ns_classifier_predict_ids(
    c: *const NsClassifier,
    ids: *const u32,
    len: usize,
    out_probs: *mut f64,
    out_label: *mut i32,
) -> NsStatus {
    guard(|| {
        let c = c.as_ref().ok_or_else(|| null("classifier"))?;
        let ids = slice(ids, len, "ids")?;
        let vocab = c.pipeline.vocab.len();
        if let Some(bad) = ids.iter().find(|&&id| id as usize >= vocab) {
            return Err((
                NsStatus::InvalidArgument,
                format!("token id {bad} outside vocabulary of {vocab}"),
            ));
        }
        let seq = EncodedSequence { ids: ids.to_vec() };
        let probs = predict_probs(&seq, &c.spec, &c.params).map_err(|e| (NsStatus::InvalidArgument, e.to_string()))?;
        write_prediction(probs, out_probs, out_label);
        Ok(())
    })
}

/// Runs raw narrative text through the classifier's text pipeline and
/// predicts. Outputs as for [`ns_classifier_predict_ids`].
///
/// # Safety
/// `text` must be a NUL-terminated string; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn ns_classifier_predict_text(
    c: *const NsClassifier,
    text: *const c_char,
    out_probs: *mut f64,
    out_label: *mut i32,
) -> NsStatus {
    guard(|| {
        let c = c.as_ref().ok_or_else(|| null("classifier"))?;
        let text = read_str(text, "text")?;
        let seq = c.pipeline.encode(text);
        let probs = predict_probs(&seq, &c.spec, &c.params).map_err(|e| (NsStatus::InvalidArgument, e.to_string()))?;
        write_prediction(probs, out_probs, out_label);
        Ok(())
    })
}

/// Metrics over `n` (prediction, label) code pairs, each in 0..=3.
/// `averaging` is `NS_AVERAGING_MACRO` or `NS_AVERAGING_WEIGHTED`.
///
/// # Safety
/// `preds` and `labels` must each point to `n` values; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn ns_compute_metrics(
    preds: *const i32,
    labels: *const i32,
    n: usize,
    averaging: u32,
    out: *mut NsMetrics,
) -> NsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let mode = match averaging {
            NS_AVERAGING_MACRO => Averaging::Macro,
            NS_AVERAGING_WEIGHTED => Averaging::Weighted,
            other => return Err((NsStatus::InvalidArgument, format!("unknown averaging mode {other}"))),
        };
        let decode = |codes: &[i32], what: &str| -> FfiResult<Vec<DamageLabel>> {
            codes
                .iter()
                .map(|&c| {
                    usize::try_from(c)
                        .ok()
                        .and_then(DamageLabel::from_code)
                        .ok_or_else(|| (NsStatus::InvalidArgument, format!("{what}: invalid label code {c}")))
                })
                .collect()
        };
        let p = decode(slice(preds, n, "preds")?, "preds")?;
        let l = decode(slice(labels, n, "labels")?, "labels")?;
        let cm = confusion_matrix(&p, &l).map_err(|e| (NsStatus::InvalidArgument, e.to_string()))?;
        let r = compute_metrics(&cm, mode).map_err(|e| (NsStatus::InvalidArgument, e.to_string()))?;
        let mut m = NsMetrics {
            accuracy: r.accuracy,
            precision: r.aggregate.precision,
            recall: r.aggregate.recall,
            f1: r.aggregate.f1,
            ..Default::default()
        };
        for (i, c) in r.per_class.iter().enumerate() {
            m.class_precision[i] = c.precision;
            m.class_recall[i] = c.recall;
            m.class_f1[i] = c.f1;
            m.class_support[i] = c.support;
        }
        for (t, row) in cm.counts.iter().enumerate() {
            m.confusion[t * NS_NUM_CLASSES..(t + 1) * NS_NUM_CLASSES].copy_from_slice(row);
        }
        *out = m;
        Ok(())
    })
}

/// Lowercases and strips punctuation and digits, as the first stage of the
/// text pipeline. Free the result with [`ns_string_free`].
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ns_normalize_text(text: *const c_char, out: *mut *mut c_char) -> NsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        *out = into_c_string(normalize_text(read_str(text, "text")?));
        Ok(())
    })
}

/// Full token pipeline with the built-in English stoplist; tokens are joined
/// by single spaces. Free the result with [`ns_string_free`].
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ns_preprocess_text(text: *const c_char, out: *mut *mut c_char) -> NsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let tokens = preprocess(read_str(text, "text")?, &Stoplist::english());
        *out = into_c_string(tokens.join(" "));
        Ok(())
    })
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ns_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
