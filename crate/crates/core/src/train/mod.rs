//! Data splitting, loss, optimizer and the mini-batch training loop.

mod optim;
mod split;

pub use optim::{adam_update, adam_update_tensors, AdamState};
pub use split::{redraw_validation, split_dataset, DataSplit, SplitSpec, MIN_SPLIT_RECORDS};

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{EncodedDataset, EncodedRecord};
use crate::nn::{model_backward, model_forward, predict_class, predict_probs, Gradients, ModelParams, ModelSpec, NnError};
use crate::rng::{derive_seed, SeededRng};
use crate::tensor::TensorError;
use crate::vocab::one_hot;

/// Probabilities are floored here before taking the log.
pub const LOSS_FLOOR: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("split: {0}")]
    Split(String),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite loss or gradient at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// `-ln(max(p_true, 1e-12))` where `p_true = <probs, one_hot>`.
pub fn cross_entropy(probs: &[f64], one_hot: &[f64]) -> f64 {
    let p: f64 = probs.iter().zip(one_hot).map(|(p, y)| p * y).sum();
    -p.max(LOSS_FLOOR).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global-norm clip threshold, applied when `clip` is set.
    pub clip_norm: f64,
    pub clip: bool,
    /// Seeds weight init and per-epoch shuffling.
    pub seed: u64,
    pub evaluate_validation: bool,
    /// Re-draw the validation holdout from the non-test pool every epoch.
    pub reval_per_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: 5.0,
            clip: true,
            seed: 42,
            evaluate_validation: true,
            reval_per_epoch: false,
        }
    }
}

impl TrainConfig {
    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive and finite");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if self.clip && !(self.clip_norm > 0.0) {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    /// NaN when there is no validation set or evaluation is off.
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainingHistory {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,train_acc,val_loss,val_acc";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{:.6}",
                e.epoch, e.train_loss, e.train_acc, e.val_loss, e.val_acc
            );
        }
        out
    }

    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub params: ModelParams,
    pub history: TrainingHistory,
    pub split: DataSplit,
}

/// Mean loss and accuracy of `params` over `records`.
pub fn evaluate_records(
    spec: &ModelSpec,
    params: &ModelParams,
    records: &[&EncodedRecord],
) -> Result<(f64, f64), NnError> {
    if records.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let per: Vec<(f64, bool)> = records
        .par_iter()
        .map(|r| {
            let probs = predict_probs(&r.sequence, spec, params)?;
            Ok((cross_entropy(&probs, &one_hot(r.label)), predict_class(&probs) == r.label))
        })
        .collect::<Result<_, NnError>>()?;
    let n = per.len() as f64;
    let loss = per.iter().map(|(l, _)| l).sum::<f64>() / n;
    let acc = per.iter().filter(|(_, c)| *c).count() as f64 / n;
    Ok((loss, acc))
}

/// Mean loss and gradient over one batch. Per-record work runs in
/// parallel; the reduction is sequential in batch order so results do not
/// depend on the thread count.
pub fn batch_gradient(
    spec: &ModelSpec,
    params: &ModelParams,
    batch: &[&EncodedRecord],
) -> Result<(f64, Gradients), NnError> {
    let per: Vec<(f64, Gradients)> = batch
        .par_iter()
        .map(|r| {
            let y = one_hot(r.label);
            let (probs, cache) = model_forward(&r.sequence, spec, params)?;
            let g = model_backward(&cache, &y, spec, params)?;
            Ok((cross_entropy(&probs, &y), g))
        })
        .collect::<Result<_, NnError>>()?;
    let mut total = Gradients::zeros_like(params);
    let mut loss = 0.0;
    for (l, g) in &per {
        loss += l;
        total.add_assign(g);
    }
    let inv = 1.0 / batch.len() as f64;
    total.scale(inv);
    Ok((loss * inv, total))
}

/// Splits `dataset` with `split_spec` and trains on the result.
pub fn train_model(
    spec: &ModelSpec,
    dataset: &EncodedDataset,
    config: &TrainConfig,
    split_spec: &SplitSpec,
) -> Result<TrainedModel, TrainError> {
    let split = split_dataset(dataset.len(), split_spec)?;
    let params = ModelParams::init(spec, dataset.vocab_size, config.seed)?;
    train_on_split(spec, dataset, config, split_spec, split, params)
}

/// Trains `params` in place on a precomputed split.
pub fn train_on_split(
    spec: &ModelSpec,
    dataset: &EncodedDataset,
    config: &TrainConfig,
    split_spec: &SplitSpec,
    split: DataSplit,
    mut params: ModelParams,
) -> Result<TrainedModel, TrainError> {
    config.validate()?;
    spec.validate()?;
    params.check_shapes(spec)?;
    if split.train.is_empty() {
        return Err(TrainError::Split("training set is empty".into()));
    }
    let mut state = AdamState::new(&params);
    let mut history = TrainingHistory::default();
    let mut current = split.clone();

    for epoch in 1..=config.epochs {
        if config.reval_per_epoch {
            current = redraw_validation(&split, split_spec, epoch);
        }
        let mut order = current.train.clone();
        SeededRng::new(derive_seed(config.seed, epoch as u64)).shuffle(&mut order);

        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = dataset.select(chunk);
            let (loss, mut grads) = batch_gradient(spec, &params, &batch)?;
            let norm = if config.clip {
                grads.clip_global_norm(config.clip_norm)
            } else {
                grads.global_norm()
            };
            if !loss.is_finite() || !norm.is_finite() {
                return Err(TrainError::NonFinite { epoch, batch: b + 1 });
            }
            adam_update(&mut params, &grads, &mut state, config)?;
            log::trace!("epoch {epoch} batch {} loss {loss:.6} grad_norm {norm:.6}", b + 1);
        }
        if !params.is_finite() {
            return Err(TrainError::NonFinite {
                epoch,
                batch: current.train.len().div_ceil(config.batch_size),
            });
        }

        let (train_loss, train_acc) = evaluate_records(spec, &params, &dataset.select(&current.train))?;
        let (val_loss, val_acc) = if config.evaluate_validation {
            evaluate_records(spec, &params, &dataset.select(&current.validation))?
        } else {
            (f64::NAN, f64::NAN)
        };
        log::info!(
            "{} epoch {epoch}/{}: loss {train_loss:.4} acc {train_acc:.4} val_loss {val_loss:.4} val_acc {val_acc:.4}",
            spec.name,
            config.epochs
        );
        history.epochs.push(EpochStats {
            epoch,
            train_loss,
            train_acc,
            val_loss,
            val_acc,
        });
    }
    Ok(TrainedModel { params, history, split })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::DamageLabel;
    use crate::nn::{CellKind, RecurrentLayerSpec};
    use crate::vocab::EncodedSequence;

    #[test]
    fn cross_entropy_values() {
        assert!((cross_entropy(&[0.25; 4], &one_hot(DamageLabel::Minor)) - 4f64.ln()).abs() < 1e-15);
        assert_eq!(cross_entropy(&[0.0, 1.0, 0.0, 0.0], &one_hot(DamageLabel::Substantial)), 0.0);
        let floored = cross_entropy(&[0.0, 1.0, 0.0, 0.0], &one_hot(DamageLabel::Destroyed));
        assert!((floored - 12.0 * 10f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn history_csv_format() {
        let h = TrainingHistory {
            epochs: vec![EpochStats {
                epoch: 1,
                train_loss: 1.0 / 3.0,
                train_acc: 0.5,
                val_loss: 2.0,
                val_acc: 0.125,
            }],
        };
        assert_eq!(
            h.to_csv(),
            "epoch,train_loss,train_acc,val_loss,val_acc\n1,0.333333,0.500000,2.000000,0.125000\n"
        );
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: f64::NAN, ..Default::default() }.validate().is_err());
    }

    fn toy_dataset(n: usize) -> EncodedDataset {
        let records = (0..n)
            .map(|i| {
                let label = DamageLabel::ALL[i % 4];
                let marker = 2 + label.code() as u32;
                EncodedRecord {
                    label,
                    sequence: EncodedSequence { ids: vec![marker, 6 + (i % 3) as u32, marker, 0] },
                }
            })
            .collect();
        EncodedDataset { seq_len: 4, vocab_size: 9, records }
    }

    fn toy_spec() -> ModelSpec {
        ModelSpec::stacked("toy", 4, vec![RecurrentLayerSpec::new(CellKind::Gru, 6)], Some(6))
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let data = toy_dataset(40);
        let cfg = TrainConfig { epochs: 40, batch_size: 8, learning_rate: 0.01, ..Default::default() };
        let a = train_model(&toy_spec(), &data, &cfg, &SplitSpec::default()).unwrap();
        let b = train_model(&toy_spec(), &data, &cfg, &SplitSpec::default()).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.history.to_csv(), b.history.to_csv());
        let first = a.history.epochs[0].train_loss;
        let last = a.history.last().unwrap();
        assert!(last.train_loss < first, "{first} -> {}", last.train_loss);
        assert_eq!(last.train_acc, 1.0);
    }

    #[test]
    fn thread_count_does_not_change_result() {
        let data = toy_dataset(30);
        let cfg = TrainConfig { epochs: 2, batch_size: 7, ..Default::default() };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| train_model(&toy_spec(), &data, &cfg, &SplitSpec::default()).unwrap())
        };
        assert_eq!(run(1).params, run(4).params);
    }

    #[test]
    fn non_finite_aborts() {
        let data = toy_dataset(20);
        let spec = toy_spec();
        let mut params = ModelParams::init(&spec, 9, 1).unwrap();
        params.net.output.b.data_mut()[0] = f64::NAN;
        let split = split_dataset(20, &SplitSpec::default()).unwrap();
        let err = train_on_split(&spec, &data, &TrainConfig::default(), &SplitSpec::default(), split, params)
            .unwrap_err();
        assert!(matches!(err, TrainError::NonFinite { epoch: 1, batch: 1 }), "{err}");
    }

    #[test]
    fn validation_evaluation_does_not_affect_updates() {
        let data = toy_dataset(40);
        let on = TrainConfig { epochs: 3, batch_size: 5, ..Default::default() };
        let off = TrainConfig { evaluate_validation: false, ..on.clone() };
        let a = train_model(&toy_spec(), &data, &on, &SplitSpec::default()).unwrap();
        let b = train_model(&toy_spec(), &data, &off, &SplitSpec::default()).unwrap();
        assert_eq!(a.params, b.params);
        assert!(a.history.epochs.iter().all(|e| e.val_acc.is_finite()));
        assert!(b.history.epochs.iter().all(|e| e.val_acc.is_nan()));
    }

    #[test]
    fn reval_keeps_test_fixed() {
        let data = toy_dataset(40);
        let cfg = TrainConfig { epochs: 2, reval_per_epoch: true, ..Default::default() };
        let t = train_model(&toy_spec(), &data, &cfg, &SplitSpec::default()).unwrap();
        assert_eq!(t.split, split_dataset(40, &SplitSpec::default()).unwrap());
        assert_eq!(t.history.epochs.len(), 2);
    }
}
