//! Frequency-ranked vocabulary, fixed-length sequence encoding and one-hot
//! labels.

use std::collections::HashMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ingest::DamageLabel;

pub const PAD_ID: u32 = 0;
pub const OOV_ID: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const OOV_TOKEN: &str = "<oov>";
pub const DEFAULT_VOCAB_SIZE: usize = 100_000;
pub const DEFAULT_SEQ_LEN: usize = 2000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    index_of: HashMap<String, u32>,
    /// Token at each index; entries 0 and 1 are the reserved markers.
    tokens: Vec<String>,
    frequencies: Vec<u64>,
    max_size: usize,
}

/// One row of the sidecar vocabulary dump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub token: String,
    pub index: u32,
    pub frequency: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabDump {
    pub max_size: usize,
    pub entries: Vec<VocabEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum VocabError {
    #[error("vocabulary entry {position} has index {found}, expected {expected}")]
    NonContiguous {
        position: usize,
        found: u32,
        expected: u32,
    },
    #[error("vocabulary token {0:?} appears twice")]
    Duplicate(String),
    #[error("vocabulary dump must start with the reserved {PAD_TOKEN} and {OOV_TOKEN} entries")]
    MissingReserved,
    #[error("vocabulary has {size} entries, more than max_size {max_size}")]
    TooLarge { size: usize, max_size: usize },
}

impl Vocabulary {
    /// Counts token frequencies and keeps the `max_size - 2` most frequent,
    /// ties broken by ascending token.
    pub fn build(corpus: &[Vec<String>], max_size: usize) -> Self {
        assert!(max_size >= 2, "vocabulary max_size must be at least 2");
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for doc in corpus {
            for tok in doc {
                *counts.entry(tok.as_str()).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size - 2);

        let mut vocab = Self::reserved_only(max_size);
        for (tok, freq) in ranked {
            vocab.push(tok.to_string(), freq);
        }
        vocab
    }

    fn reserved_only(max_size: usize) -> Self {
        Self {
            index_of: HashMap::new(),
            tokens: vec![PAD_TOKEN.to_string(), OOV_TOKEN.to_string()],
            frequencies: vec![0, 0],
            max_size,
        }
    }

    fn push(&mut self, token: String, frequency: u64) {
        let idx = self.tokens.len() as u32;
        self.index_of.insert(token.clone(), idx);
        self.tokens.push(token);
        self.frequencies.push(frequency);
    }

    /// Total size including the two reserved indices.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    /// Index of a corpus token; reserved markers are never returned.
    pub fn index_of(&self, token: &str) -> Option<u32> {
        self.index_of.get(token).copied()
    }

    pub fn id_or_oov(&self, token: &str) -> u32 {
        self.index_of(token).unwrap_or(OOV_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn frequency(&self, id: u32) -> Option<u64> {
        self.frequencies.get(id as usize).copied()
    }

    pub fn to_dump(&self) -> VocabDump {
        VocabDump {
            max_size: self.max_size,
            entries: self
                .tokens
                .iter()
                .zip(&self.frequencies)
                .enumerate()
                .map(|(i, (t, &f))| VocabEntry {
                    token: t.clone(),
                    index: i as u32,
                    frequency: f,
                })
                .collect(),
        }
    }

    pub fn from_dump(dump: &VocabDump) -> Result<Self, VocabError> {
        let entries = &dump.entries;
        if entries.len() < 2 || entries[0].token != PAD_TOKEN || entries[1].token != OOV_TOKEN {
            return Err(VocabError::MissingReserved);
        }
        if entries.len() > dump.max_size {
            return Err(VocabError::TooLarge {
                size: entries.len(),
                max_size: dump.max_size,
            });
        }
        let mut vocab = Self::reserved_only(dump.max_size);
        for (pos, entry) in entries.iter().enumerate() {
            if entry.index as usize != pos {
                return Err(VocabError::NonContiguous {
                    position: pos,
                    found: entry.index,
                    expected: pos as u32,
                });
            }
            if pos < 2 {
                continue;
            }
            if vocab.index_of.contains_key(&entry.token) {
                return Err(VocabError::Duplicate(entry.token.clone()));
            }
            vocab.push(entry.token.clone(), entry.frequency);
        }
        Ok(vocab)
    }
}

/// Which end receives padding. Truncation always keeps the first tokens.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PadSide {
    Pre,
    #[default]
    Post,
}

impl FromStr for PadSide {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pre" => Ok(PadSide::Pre),
            "post" => Ok(PadSide::Post),
            other => Err(format!("pad side must be pre or post, got {other:?}")),
        }
    }
}

/// Fixed-length id sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EncodedSequence {
    pub ids: Vec<u32>,
}

impl EncodedSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

pub fn encode_sequence(
    tokens: &[String],
    vocab: &Vocabulary,
    length: usize,
    pad: PadSide,
) -> EncodedSequence {
    assert!(length >= 1, "sequence length must be positive");
    let body: Vec<u32> = tokens
        .iter()
        .take(length)
        .map(|t| vocab.id_or_oov(t))
        .collect();
    let padding = length - body.len();
    let ids = match pad {
        PadSide::Post => body
            .into_iter()
            .chain(std::iter::repeat_n(PAD_ID, padding))
            .collect(),
        PadSide::Pre => std::iter::repeat_n(PAD_ID, padding).chain(body).collect(),
    };
    EncodedSequence { ids }
}

/// Inverse lookup of the non-padding ids.
pub fn decode_sequence(seq: &EncodedSequence, vocab: &Vocabulary) -> Vec<String> {
    seq.ids
        .iter()
        .filter(|&&id| id != PAD_ID)
        .map(|&id| vocab.token(id).unwrap_or(OOV_TOKEN).to_string())
        .collect()
}

pub fn one_hot(label: DamageLabel) -> [f64; 4] {
    let mut v = [0.0; 4];
    v[label.code()] = 1.0;
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn empty_corpus_has_only_reserved() {
        let v = Vocabulary::build(&[], 100);
        assert_eq!(v.len(), 2);
        assert_eq!(v.token(0), Some(PAD_TOKEN));
        assert_eq!(v.token(1), Some(OOV_TOKEN));
    }

    #[test]
    fn frequency_then_lexicographic_order() {
        let v = Vocabulary::build(&[toks(&["a", "b"]), toks(&["b", "c"])], 100);
        assert_eq!(v.index_of("b"), Some(2));
        assert_eq!(v.index_of("a"), Some(3));
        assert_eq!(v.index_of("c"), Some(4));
        assert_eq!(v.len(), 5);
        assert_eq!(v.frequency(2), Some(2));
    }

    #[test]
    fn capped_at_max_size() {
        let corpus: Vec<Vec<String>> = (0..100_005).map(|i| vec![format!("t{i}")]).collect();
        let v = Vocabulary::build(&corpus, DEFAULT_VOCAB_SIZE);
        assert_eq!(v.len(), 100_000);
        // All frequencies tie, so the lexicographically smallest survive.
        assert_eq!(v.index_of("t0"), Some(2));
    }

    #[test]
    fn reserved_markers_are_not_corpus_tokens() {
        let v = Vocabulary::build(&[toks(&["<pad>", "x"])], 10);
        // A literal "<pad>" in the text is an ordinary token ranked with the rest.
        assert_eq!(v.index_of("<pad>"), Some(2));
        assert_eq!(v.index_of("x"), Some(3));
        assert_eq!(v.token(0), Some(PAD_TOKEN));
    }

    #[test]
    fn encode_examples() {
        let v = Vocabulary::build(&[toks(&["a", "b"]), toks(&["b", "c"])], 100);
        assert_eq!(encode_sequence(&[], &v, 2000, PadSide::Post).ids, vec![0; 2000]);
        assert_eq!(
            encode_sequence(&toks(&["b", "zzz"]), &v, 5, PadSide::Post).ids,
            vec![2, 1, 0, 0, 0]
        );
        assert_eq!(
            encode_sequence(&toks(&["b", "zzz"]), &v, 5, PadSide::Pre).ids,
            vec![0, 0, 0, 2, 1]
        );
    }

    #[test]
    fn truncation_keeps_the_opening() {
        let words: Vec<String> = (0..2500).map(|i| format!("w{i}")).collect();
        let v = Vocabulary::build(std::slice::from_ref(&words), DEFAULT_VOCAB_SIZE);
        for pad in [PadSide::Pre, PadSide::Post] {
            let enc = encode_sequence(&words, &v, DEFAULT_SEQ_LEN, pad);
            assert_eq!(enc.len(), 2000);
            let expected: Vec<u32> = words[..2000].iter().map(|w| v.id_or_oov(w)).collect();
            assert_eq!(enc.ids, expected);
        }
    }

    #[test]
    fn one_hot_examples() {
        assert_eq!(one_hot(DamageLabel::Destroyed), [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(one_hot(DamageLabel::NoDamage), [0.0, 0.0, 0.0, 1.0]);
        let mut sum = [0.0; 4];
        for l in DamageLabel::ALL {
            for (s, v) in sum.iter_mut().zip(one_hot(l)) {
                *s += v;
            }
        }
        assert_eq!(sum, [1.0; 4]);
    }

    #[test]
    fn dump_round_trip() {
        let v = Vocabulary::build(&[toks(&["x", "y", "y"])], 50);
        let back = Vocabulary::from_dump(&v.to_dump()).unwrap();
        assert_eq!(back, v);
        let mut bad = v.to_dump();
        bad.entries[2].index = 7;
        assert!(matches!(
            Vocabulary::from_dump(&bad),
            Err(VocabError::NonContiguous { .. })
        ));
    }

    proptest! {
        #[test]
        fn indices_contiguous_and_bounded(
            corpus in prop::collection::vec(prop::collection::vec("[a-e]{1,2}", 0..8), 0..8),
            max_size in 2usize..12,
        ) {
            let v = Vocabulary::build(&corpus, max_size);
            prop_assert!(v.len() <= max_size);
            for id in 2..v.len() as u32 {
                let tok = v.token(id).unwrap();
                prop_assert_eq!(v.index_of(tok), Some(id));
                if id > 2 {
                    let prev = v.frequency(id - 1).unwrap();
                    let cur = v.frequency(id).unwrap();
                    prop_assert!(prev > cur || (prev == cur && v.token(id - 1).unwrap() < tok));
                }
            }
        }
    }
}
