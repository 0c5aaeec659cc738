//! Experiment configuration, read from a flat TOML document.
//!
//! Every key is optional. Example:
//!
//! ```toml
//! data_path = "data/encoded"
//! output_dir = "runs/full"
//! model_names = ["LSTM", "GRU-BLSTM-sRNN"]
//! seq_len = 2000
//! vocab_size = 100000
//! epochs = 10
//! batch_size = 32
//! learning_rate = 0.001
//! seed = 42
//! parallelism = 2
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::eval::Averaging;
use crate::train::{SplitSpec, TrainConfig};
use crate::vocab::{PadSide, DEFAULT_SEQ_LEN, DEFAULT_VOCAB_SIZE};
use crate::zoo::{canonical_name, ZooWidths, ZOO_NAMES};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// An encoded directory, or a raw JSON/CSV corpus to preprocess first.
    pub data_path: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub model_names: Vec<String>,

    pub seq_len: usize,
    pub vocab_size: usize,
    pub pad: PadSide,
    /// Custom stoplist file; the bundled English list is used otherwise.
    pub stoplist: Option<PathBuf>,

    pub embedding_dim: usize,
    pub hidden_units: usize,
    pub dense_hidden_units: usize,
    pub mask_padding: bool,

    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub clip_norm: f64,
    pub clip: bool,
    pub seed: u64,
    pub reval_per_epoch: bool,

    pub test_fraction: f64,
    pub validation_fraction: f64,
    /// Defaults to `seed`.
    pub split_seed: Option<u64>,

    pub averaging: Averaging,
    pub parallelism: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let s = SplitSpec::default();
        let z = ZooWidths::default();
        Self {
            data_path: None,
            output_dir: None,
            model_names: ZOO_NAMES.iter().map(|s| s.to_string()).collect(),
            seq_len: DEFAULT_SEQ_LEN,
            vocab_size: DEFAULT_VOCAB_SIZE,
            pad: PadSide::default(),
            stoplist: None,
            embedding_dim: z.embedding_dim,
            hidden_units: z.hidden_units,
            dense_hidden_units: z.dense_hidden_units,
            mask_padding: z.mask_padding,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            clip_norm: t.clip_norm,
            clip: t.clip,
            seed: t.seed,
            reval_per_epoch: t.reval_per_epoch,
            test_fraction: s.test_fraction,
            validation_fraction: s.validation_fraction_of_train,
            split_seed: None,
            averaging: Averaging::default(),
            parallelism: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            clip_norm: self.clip_norm,
            clip: self.clip,
            seed: self.seed,
            evaluate_validation: true,
            reval_per_epoch: self.reval_per_epoch,
        }
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            test_fraction: self.test_fraction,
            validation_fraction_of_train: self.validation_fraction,
            seed: self.split_seed.unwrap_or(self.seed),
        }
    }

    pub fn zoo_widths(&self) -> ZooWidths {
        ZooWidths {
            embedding_dim: self.embedding_dim,
            hidden_units: self.hidden_units,
            dense_hidden_units: self.dense_hidden_units,
            mask_padding: self.mask_padding,
        }
    }

    /// Canonical model names in the order given.
    pub fn resolved_models(&self) -> Result<Vec<&'static str>, ConfigError> {
        if self.model_names.is_empty() {
            return Err(ConfigError::Invalid("model_names is empty".into()));
        }
        let mut out: Vec<&'static str> = Vec::new();
        for n in &self.model_names {
            let c = canonical_name(n).map_err(|e| ConfigError::Invalid(e.to_string()))?;
            if out.contains(&c) {
                return Err(ConfigError::Invalid(format!("model {c} listed twice")));
            }
            out.push(c);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.resolved_models()?;
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1".into());
        }
        if self.seq_len == 0 {
            return bad("seq_len must be positive".into());
        }
        if self.vocab_size < 3 {
            return bad("vocab_size must be at least 3".into());
        }
        if self.embedding_dim == 0 || self.hidden_units == 0 || self.dense_hidden_units == 0 {
            return bad("layer widths must be positive".into());
        }
        self.train_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}
