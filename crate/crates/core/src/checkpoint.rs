//! Self-describing model checkpoints.
//!
//! File layout: the 8-byte magic `NSCKPT\0\0`, a little-endian `u64`
//! manifest length, the JSON manifest, then the parameter blob. Tensors
//! are stored row-major in [`ModelParams::named`] order as little-endian
//! `f64` (or `f32` when requested).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::nn::{ModelParams, ModelSpec, NnError};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NSCKPT\0\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic)")]
    Magic,
    #[error("invalid checkpoint manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("unsupported checkpoint format_version {found} (this build reads {supported})")]
    Version { found: u32, supported: u32 },
    #[error("vocabulary fingerprint mismatch: checkpoint has {found}, data has {expected}")]
    Fingerprint { expected: String, found: String },
    #[error("checkpoint truncated: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StorageDtype {
    #[default]
    F64,
    F32,
}

impl StorageDtype {
    fn width(self) -> usize {
        match self {
            StorageDtype::F64 => 8,
            StorageDtype::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub vocab_fingerprint: String,
    pub vocab_size: usize,
    pub dtype: StorageDtype,
    pub tensors: Vec<TensorEntry>,
    pub blob_bytes: usize,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub params: ModelParams,
    pub vocab_fingerprint: String,
}

pub fn checkpoint_bytes(
    params: &ModelParams,
    spec: &ModelSpec,
    vocab_fingerprint: &str,
    dtype: StorageDtype,
) -> Result<Vec<u8>, CheckpointError> {
    params.check_shapes(spec)?;
    let mut tensors = Vec::new();
    let mut blob = Vec::with_capacity(params.parameter_count() * dtype.width());
    for (name, t) in params.named() {
        tensors.push(TensorEntry {
            name,
            shape: t.shape().to_vec(),
            offset: blob.len(),
        });
        for &v in t.data() {
            match dtype {
                StorageDtype::F64 => blob.extend_from_slice(&v.to_le_bytes()),
                StorageDtype::F32 => blob.extend_from_slice(&(v as f32).to_le_bytes()),
            }
        }
    }
    let manifest = CheckpointManifest {
        format_version: FORMAT_VERSION,
        spec: spec.clone(),
        vocab_fingerprint: vocab_fingerprint.to_string(),
        vocab_size: params.vocab_size(),
        dtype,
        tensors,
        blob_bytes: blob.len(),
    };
    let json = serde_json::to_vec(&manifest)?;
    let mut out = Vec::with_capacity(16 + json.len() + blob.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&blob);
    Ok(out)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn save_checkpoint(
    params: &ModelParams,
    spec: &ModelSpec,
    vocab_fingerprint: &str,
    path: &Path,
) -> Result<(), CheckpointError> {
    save_checkpoint_as(params, spec, vocab_fingerprint, path, StorageDtype::F64)
}

pub fn save_checkpoint_as(
    params: &ModelParams,
    spec: &ModelSpec,
    vocab_fingerprint: &str,
    path: &Path,
    dtype: StorageDtype,
) -> Result<(), CheckpointError> {
    let bytes = checkpoint_bytes(params, spec, vocab_fingerprint, dtype)?;
    std::fs::write(path, bytes).map_err(io_err(path))
}

/// Parses the header and manifest; returns the manifest and blob.
pub fn read_manifest(bytes: &[u8]) -> Result<(CheckpointManifest, &[u8]), CheckpointError> {
    if bytes.len() < 16 {
        return if bytes.starts_with(&CHECKPOINT_MAGIC[..bytes.len().min(8)]) {
            Err(CheckpointError::Truncated {
                expected: 16,
                actual: bytes.len(),
            })
        } else {
            Err(CheckpointError::Magic)
        };
    }
    if &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::Magic);
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let end = 16usize
        .checked_add(len)
        .ok_or_else(|| CheckpointError::Corrupt("manifest length overflows".into()))?;
    if bytes.len() < end {
        return Err(CheckpointError::Truncated {
            expected: end,
            actual: bytes.len(),
        });
    }
    // Check the version before the full schema so old or future files get
    // a version error rather than a parse error.
    let raw: serde_json::Value = serde_json::from_slice(&bytes[16..end])?;
    let found = raw
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| CheckpointError::Corrupt("manifest has no format_version".into()))?;
    if found != FORMAT_VERSION as u64 {
        return Err(CheckpointError::Version {
            found: found as u32,
            supported: FORMAT_VERSION,
        });
    }
    let manifest: CheckpointManifest = serde_json::from_value(raw)?;
    let blob = &bytes[end..];
    if blob.len() < manifest.blob_bytes {
        return Err(CheckpointError::Truncated {
            expected: end + manifest.blob_bytes,
            actual: bytes.len(),
        });
    }
    if blob.len() > manifest.blob_bytes {
        return Err(CheckpointError::Corrupt(format!(
            "{} trailing bytes after parameter blob",
            blob.len() - manifest.blob_bytes
        )));
    }
    Ok((manifest, blob))
}

/// Rebuilds a checkpoint from bytes. With `expected_fingerprint` set, a
/// checkpoint trained against a different vocabulary is refused.
pub fn checkpoint_from_bytes(bytes: &[u8], expected_fingerprint: Option<&str>) -> Result<Checkpoint, CheckpointError> {
    let (manifest, blob) = read_manifest(bytes)?;
    if let Some(expected) = expected_fingerprint {
        if expected != manifest.vocab_fingerprint {
            return Err(CheckpointError::Fingerprint {
                expected: expected.to_string(),
                found: manifest.vocab_fingerprint,
            });
        }
    }
    manifest.spec.validate()?;
    let mut params = ModelParams::zeros(&manifest.spec, manifest.vocab_size);
    let names: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
    if names.len() != manifest.tensors.len() {
        return Err(CheckpointError::Corrupt(format!(
            "manifest lists {} tensors, spec implies {}",
            manifest.tensors.len(),
            names.len()
        )));
    }
    let width = manifest.dtype.width();
    for ((tensor, entry), name) in params.tensors_mut().into_iter().zip(&manifest.tensors).zip(&names) {
        if &entry.name != name || entry.shape != tensor.shape() {
            return Err(CheckpointError::Corrupt(format!(
                "tensor {} {:?} does not match expected {} {:?}",
                entry.name,
                entry.shape,
                name,
                tensor.shape()
            )));
        }
        let n_bytes = tensor.len() * width;
        let src = entry
            .offset
            .checked_add(n_bytes)
            .and_then(|end| blob.get(entry.offset..end))
            .ok_or_else(|| CheckpointError::Corrupt(format!("tensor {name} lies outside the blob")))?;
        for (dst, chunk) in tensor.data_mut().iter_mut().zip(src.chunks_exact(width)) {
            *dst = match manifest.dtype {
                StorageDtype::F64 => f64::from_le_bytes(chunk.try_into().expect("8 bytes")),
                StorageDtype::F32 => f32::from_le_bytes(chunk.try_into().expect("4 bytes")) as f64,
            };
        }
    }
    Ok(Checkpoint {
        spec: manifest.spec,
        params,
        vocab_fingerprint: manifest.vocab_fingerprint,
    })
}

pub fn load_checkpoint(path: &Path, expected_fingerprint: Option<&str>) -> Result<Checkpoint, CheckpointError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    checkpoint_from_bytes(&bytes, expected_fingerprint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{predict_probs, CellKind, RecurrentLayerSpec};
    use crate::vocab::EncodedSequence;

    fn sample() -> (ModelSpec, ModelParams) {
        let spec = ModelSpec::stacked(
            "GRU-BLSTM",
            3,
            vec![
                RecurrentLayerSpec::new(CellKind::Gru, 4),
                RecurrentLayerSpec::new(CellKind::Lstm, 2).bidirectional(true),
            ],
            Some(5),
        );
        let params = ModelParams::init(&spec, 12, 3).unwrap();
        (spec, params)
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let (spec, params) = sample();
        let bytes = checkpoint_bytes(&params, &spec, "abc", StorageDtype::F64).unwrap();
        let ck = checkpoint_from_bytes(&bytes, Some("abc")).unwrap();
        assert_eq!(ck.spec, spec);
        assert_eq!(ck.params, params);
        let again = checkpoint_bytes(&ck.params, &ck.spec, &ck.vocab_fingerprint, StorageDtype::F64).unwrap();
        assert_eq!(bytes, again);
        let seq = EncodedSequence { ids: vec![3, 7, 11, 0] };
        assert_eq!(
            predict_probs(&seq, &spec, &params).unwrap(),
            predict_probs(&seq, &ck.spec, &ck.params).unwrap()
        );
    }

    #[test]
    fn file_round_trip() {
        let (spec, params) = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&params, &spec, "fp", &path).unwrap();
        let ck = load_checkpoint(&path, None).unwrap();
        assert_eq!(ck.params, params);
        let err = load_checkpoint(&dir.path().join("missing"), None).unwrap_err();
        assert!(err.to_string().contains("missing"));
    }

    #[test]
    fn fingerprint_guard() {
        let (spec, params) = sample();
        let bytes = checkpoint_bytes(&params, &spec, "aaa", StorageDtype::F64).unwrap();
        let err = checkpoint_from_bytes(&bytes, Some("bbb")).unwrap_err();
        assert!(matches!(err, CheckpointError::Fingerprint { .. }), "{err}");
    }

    #[test]
    fn truncation_names_byte_counts() {
        let (spec, params) = sample();
        let bytes = checkpoint_bytes(&params, &spec, "x", StorageDtype::F64).unwrap();
        let cut = &bytes[..bytes.len() - 10];
        match checkpoint_from_bytes(cut, None).unwrap_err() {
            CheckpointError::Truncated { expected, actual } => {
                assert_eq!(expected, bytes.len());
                assert_eq!(actual, bytes.len() - 10);
            }
            e => panic!("unexpected {e}"),
        }
        assert!(matches!(
            checkpoint_from_bytes(&bytes[..20], None),
            Err(CheckpointError::Truncated { .. })
        ));
    }

    #[test]
    fn version_mismatch() {
        let (spec, params) = sample();
        let bytes = checkpoint_bytes(&params, &spec, "x", StorageDtype::F64).unwrap();
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let json = std::str::from_utf8(&bytes[16..16 + len]).unwrap();
        let bumped = json.replacen("\"format_version\":1", "\"format_version\":9", 1);
        assert_eq!(bumped.len(), json.len());
        let mut edited = bytes.clone();
        edited[16..16 + len].copy_from_slice(bumped.as_bytes());
        assert!(matches!(
            checkpoint_from_bytes(&edited, None),
            Err(CheckpointError::Version { found: 9, supported: 1 })
        ));
    }

    #[test]
    fn bad_magic() {
        assert!(matches!(checkpoint_from_bytes(b"NSEQ1 not a checkpoint", None), Err(CheckpointError::Magic)));
    }

    #[test]
    fn spec_travels_with_params() {
        let spec = ModelSpec::stacked("GRU", 2, vec![RecurrentLayerSpec::new(CellKind::Gru, 3)], Some(2));
        let params = ModelParams::init(&spec, 5, 1).unwrap();
        let bytes = checkpoint_bytes(&params, &spec, "", StorageDtype::F64).unwrap();
        let ck = checkpoint_from_bytes(&bytes, None).unwrap();
        assert_eq!(ck.spec.recurrent_stack[0].kind, CellKind::Gru);
    }

    #[test]
    fn f32_storage_is_smaller_and_close() {
        let (spec, params) = sample();
        let full = checkpoint_bytes(&params, &spec, "x", StorageDtype::F64).unwrap();
        let half = checkpoint_bytes(&params, &spec, "x", StorageDtype::F32).unwrap();
        assert!(half.len() < full.len());
        let ck = checkpoint_from_bytes(&half, None).unwrap();
        for ((_, a), (_, b)) in ck.params.named().iter().zip(params.named()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() <= 1e-7 * y.abs().max(1e-30));
            }
        }
    }
}
