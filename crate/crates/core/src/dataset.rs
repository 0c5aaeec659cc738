//! Encoded dataset container and the on-disk layout of a preprocessed
//! directory.
//!
//! ```text
//! <dir>/dataset.nseq   binary records (see below)
//! <dir>/vocab.json     vocabulary dump: token, index, frequency
//! <dir>/pipeline.json  sequence length, pad side and stoplist used
//! ```
//!
//! `dataset.nseq` starts with the 5 magic bytes `NSEQ1`, then three
//! little-endian `u32`: sequence length, vocabulary size, record count.
//! Each record is one label byte followed by `length` little-endian `u32`
//! token ids.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ingest::{DamageLabel, OccurrenceRecord};
use crate::text::{preprocess, Stoplist};
use crate::vocab::{encode_sequence, EncodedSequence, PadSide, Vocabulary, VocabDump};

pub const MAGIC: &[u8; 5] = b"NSEQ1";
pub const DATASET_FILE: &str = "dataset.nseq";
pub const VOCAB_FILE: &str = "vocab.json";
pub const PIPELINE_FILE: &str = "pipeline.json";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedRecord {
    pub label: DamageLabel,
    pub sequence: EncodedSequence,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedDataset {
    pub seq_len: usize,
    pub vocab_size: usize,
    pub records: Vec<EncodedRecord>,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: bad magic, not an encoded dataset")]
    Magic { path: PathBuf },
    #[error("{path}: expected {expected} bytes, found {actual}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },
    #[error("{path}: record {record} has label byte {byte}")]
    Label {
        path: PathBuf,
        record: usize,
        byte: u8,
    },
    #[error("{path}: record {record} has id {id} outside vocabulary of size {vocab_size}")]
    IdRange {
        path: PathBuf,
        record: usize,
        id: u32,
        vocab_size: usize,
    },
    #[error("{path}: {reason}")]
    Json { path: PathBuf, reason: String },
    #[error(transparent)]
    Vocab(#[from] crate::vocab::VocabError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl EncodedDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = DamageLabel> + '_ {
        self.records.iter().map(|r| r.label)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(17 + self.records.len() * (1 + 4 * self.seq_len));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.seq_len as u32).to_le_bytes());
        out.extend_from_slice(&(self.vocab_size as u32).to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for rec in &self.records {
            out.push(rec.label.code() as u8);
            for id in &rec.sequence.ids {
                out.extend_from_slice(&id.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self, DatasetError> {
        if bytes.len() < 17 {
            if !bytes.starts_with(&MAGIC[..bytes.len().min(5)]) {
                return Err(DatasetError::Magic {
                    path: path.to_path_buf(),
                });
            }
            return Err(DatasetError::Truncated {
                path: path.to_path_buf(),
                expected: 17,
                actual: bytes.len() as u64,
            });
        }
        if &bytes[..5] != MAGIC {
            return Err(DatasetError::Magic {
                path: path.to_path_buf(),
            });
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let seq_len = word(5) as usize;
        let vocab_size = word(9) as usize;
        let count = word(13) as usize;
        let record_bytes = 1 + 4 * seq_len;
        let expected = 17 + (count * record_bytes) as u64;
        if bytes.len() as u64 != expected {
            return Err(DatasetError::Truncated {
                path: path.to_path_buf(),
                expected,
                actual: bytes.len() as u64,
            });
        }
        let mut records = Vec::with_capacity(count);
        for (i, chunk) in bytes[17..].chunks_exact(record_bytes).enumerate() {
            let label = DamageLabel::from_code(chunk[0] as usize).ok_or(DatasetError::Label {
                path: path.to_path_buf(),
                record: i,
                byte: chunk[0],
            })?;
            let ids: Vec<u32> = chunk[1..]
                .chunks_exact(4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            if let Some(&id) = ids.iter().find(|&&id| id as usize >= vocab_size) {
                return Err(DatasetError::IdRange {
                    path: path.to_path_buf(),
                    record: i,
                    id,
                    vocab_size,
                });
            }
            records.push(EncodedRecord {
                label,
                sequence: EncodedSequence { ids },
            });
        }
        Ok(Self {
            seq_len,
            vocab_size,
            records,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), DatasetError> {
        let file = fs::File::create(path).map_err(io_err(path))?;
        let mut w = BufWriter::new(file);
        w.write_all(&self.to_bytes()).map_err(io_err(path))?;
        w.flush().map_err(io_err(path))
    }

    pub fn read(path: &Path) -> Result<Self, DatasetError> {
        let bytes = fs::read(path).map_err(io_err(path))?;
        Self::from_bytes(&bytes, path)
    }

    /// Subset in the given index order.
    pub fn select(&self, indices: &[usize]) -> Vec<&EncodedRecord> {
        indices.iter().map(|&i| &self.records[i]).collect()
    }
}

/// Preprocessing settings recorded next to the encoded data so that new
/// text can be encoded identically later.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineMeta {
    pub seq_len: usize,
    pub pad: PadSide,
    pub vocab_max_size: usize,
    pub stopwords: Vec<String>,
}

impl PipelineMeta {
    pub fn stoplist(&self) -> Stoplist {
        self.stopwords.iter().cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreprocessOptions {
    pub vocab_size: usize,
    pub seq_len: usize,
    pub pad: PadSide,
    pub stoplist: Stoplist,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self {
            vocab_size: crate::vocab::DEFAULT_VOCAB_SIZE,
            seq_len: crate::vocab::DEFAULT_SEQ_LEN,
            pad: PadSide::Post,
            stoplist: Stoplist::english(),
        }
    }
}

/// Everything `preprocess` produces in memory.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub dataset: EncodedDataset,
    pub vocab: Vocabulary,
    pub meta: PipelineMeta,
}

/// Runs the text pipeline over records, builds the vocabulary and encodes
/// every record. Records are encoded in parallel; output keeps input order.
pub fn preprocess_records(records: &[OccurrenceRecord], opts: &PreprocessOptions) -> Preprocessed {
    use rayon::prelude::*;
    let token_lists: Vec<Vec<String>> = records
        .par_iter()
        .map(|r| preprocess(&r.narrative, &opts.stoplist))
        .collect();
    let vocab = Vocabulary::build(&token_lists, opts.vocab_size);
    let encoded: Vec<EncodedRecord> = token_lists
        .par_iter()
        .zip(records)
        .map(|(tokens, rec)| EncodedRecord {
            label: rec.damage_level,
            sequence: encode_sequence(tokens, &vocab, opts.seq_len, opts.pad),
        })
        .collect();
    let meta = PipelineMeta {
        seq_len: opts.seq_len,
        pad: opts.pad,
        vocab_max_size: opts.vocab_size,
        stopwords: opts.stoplist.words().map(str::to_string).collect(),
    };
    Preprocessed {
        dataset: EncodedDataset {
            seq_len: opts.seq_len,
            vocab_size: vocab.len(),
            records: encoded,
        },
        vocab,
        meta,
    }
}

pub fn vocab_json_bytes(vocab: &Vocabulary) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(&vocab.to_dump()).expect("vocab dump serializes");
    bytes.push(b'\n');
    bytes
}

/// Hex SHA-256 of the vocabulary dump as written to disk.
pub fn fingerprint(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes the three files of an encoded directory; returns their paths.
pub fn write_encoded_dir(dir: &Path, pre: &Preprocessed) -> Result<Vec<PathBuf>, DatasetError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let data_path = dir.join(DATASET_FILE);
    pre.dataset.write(&data_path)?;
    let vocab_path = dir.join(VOCAB_FILE);
    fs::write(&vocab_path, vocab_json_bytes(&pre.vocab)).map_err(io_err(&vocab_path))?;
    let meta_path = dir.join(PIPELINE_FILE);
    let mut meta = serde_json::to_vec_pretty(&pre.meta).expect("meta serializes");
    meta.push(b'\n');
    fs::write(&meta_path, meta).map_err(io_err(&meta_path))?;
    Ok(vec![data_path, vocab_path, meta_path])
}

/// A loaded encoded directory.
#[derive(Debug, Clone)]
pub struct EncodedDir {
    pub dataset: EncodedDataset,
    pub vocab: Vocabulary,
    pub vocab_fingerprint: String,
    pub meta: PipelineMeta,
}

/// The parts of an encoded directory needed to encode new text.
#[derive(Debug, Clone)]
pub struct TextPipeline {
    pub vocab: Vocabulary,
    pub vocab_fingerprint: String,
    pub meta: PipelineMeta,
}

impl TextPipeline {
    pub fn encode(&self, text: &str) -> EncodedSequence {
        let tokens = preprocess(text, &self.meta.stoplist());
        encode_sequence(&tokens, &self.vocab, self.meta.seq_len, self.meta.pad)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, bytes: &[u8]) -> Result<T, DatasetError> {
    serde_json::from_slice(bytes).map_err(|e| DatasetError::Json {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Reads `vocab.json` and `pipeline.json` without touching the records.
pub fn read_pipeline(dir: &Path) -> Result<TextPipeline, DatasetError> {
    let vocab_path = dir.join(VOCAB_FILE);
    let vocab_bytes = fs::read(&vocab_path).map_err(io_err(&vocab_path))?;
    let dump: VocabDump = read_json(&vocab_path, &vocab_bytes)?;
    let vocab = Vocabulary::from_dump(&dump)?;
    let meta_path = dir.join(PIPELINE_FILE);
    let meta_bytes = fs::read(&meta_path).map_err(io_err(&meta_path))?;
    let meta: PipelineMeta = read_json(&meta_path, &meta_bytes)?;
    Ok(TextPipeline {
        vocab,
        vocab_fingerprint: fingerprint(&vocab_bytes),
        meta,
    })
}

pub fn read_encoded_dir(dir: &Path) -> Result<EncodedDir, DatasetError> {
    let dataset = EncodedDataset::read(&dir.join(DATASET_FILE))?;
    let TextPipeline {
        vocab,
        vocab_fingerprint,
        meta,
    } = read_pipeline(dir)?;
    if dataset.vocab_size != vocab.len() {
        return Err(DatasetError::Json {
            path: dir.join(VOCAB_FILE),
            reason: format!(
                "vocabulary has {} entries but the dataset header says {}",
                vocab.len(),
                dataset.vocab_size
            ),
        });
    }
    Ok(EncodedDir {
        dataset,
        vocab,
        vocab_fingerprint,
        meta,
    })
}
