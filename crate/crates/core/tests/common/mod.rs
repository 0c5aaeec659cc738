#![allow(dead_code)]

use narrative_seq::dataset::{EncodedDataset, EncodedRecord};
use narrative_seq::ingest::DamageLabel;
use narrative_seq::nn::{model_backward, model_forward, CellKind, ModelParams, ModelSpec, RecurrentLayerSpec};
use narrative_seq::rng::SeededRng;
use narrative_seq::train::cross_entropy;
use narrative_seq::vocab::{one_hot, EncodedSequence};

pub const FD_EPS: f64 = 1e-5;
/// Relative error is `|a - n| / max(|a|, |n|, FD_FLOOR)`. Central
/// differences at this epsilon carry roughly 3e-11 of absolute roundoff
/// (unit roundoff times a loss near 1.4, over 2e-5), so smaller gradients
/// cannot be resolved to 1e-5 relative accuracy.
pub const FD_FLOOR: f64 = 1e-5;

pub fn stack_spec(kind: CellKind, bidirectional: bool, depth: usize, hidden: usize, emb: usize) -> ModelSpec {
    let layers = (0..depth)
        .map(|_| RecurrentLayerSpec::new(kind, hidden).bidirectional(bidirectional))
        .collect();
    ModelSpec::stacked(format!("{kind:?}x{depth}"), emb, layers, Some(hidden))
}

pub fn random_sequence(rng: &mut SeededRng, len: usize, vocab: usize) -> EncodedSequence {
    EncodedSequence {
        ids: (0..len).map(|_| rng.below(vocab) as u32).collect(),
    }
}

fn loss(seq: &EncodedSequence, y: &[f64; 4], spec: &ModelSpec, params: &ModelParams) -> f64 {
    let (probs, _) = model_forward(seq, spec, params).unwrap();
    cross_entropy(&probs, y)
}

#[derive(Debug, Clone)]
pub struct FdResult {
    pub max_rel_err: f64,
    pub worst: String,
    pub checked: usize,
}

/// Compares the analytic gradient of every parameter with central finite
/// differences of the loss.
pub fn fd_check(spec: &ModelSpec, vocab: usize, len: usize, seed: u64) -> FdResult {
    let mut params = ModelParams::init(spec, vocab, seed).unwrap();
    let mut rng = SeededRng::new(seed ^ 0x5eed);
    // Start from a non-zero padding row so its gradient is exercised too.
    for v in params.embedding.row_mut(0) {
        *v = rng.next_open01() * 0.1 - 0.05;
    }
    // Biases start at exactly zero, which can leave a ReLU pre-activation
    // sitting on its kink (e.g. a dense unit fed an all-zero sRNN state).
    // Random biases put the instance in general position.
    let names: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
    for (name, t) in names.iter().zip(params.tensors_mut()) {
        if name.ends_with(".b") {
            for v in t.data_mut() {
                *v = rng.next_open01() * 0.2 - 0.1;
            }
        }
    }
    let seq = random_sequence(&mut rng, len, vocab);
    let y = one_hot(DamageLabel::ALL[rng.below(4)]);
    let (_, cache) = model_forward(&seq, spec, &params).unwrap();
    let analytic = model_backward(&cache, &y, spec, &params).unwrap().to_dense_named();

    let mut worst = (0.0f64, String::new());
    let mut checked = 0;
    for (t, (name, grad)) in analytic.iter().enumerate() {
        for i in 0..grad.len() {
            let orig = params.tensors_mut()[t].data()[i];
            params.tensors_mut()[t].data_mut()[i] = orig + FD_EPS;
            let up = loss(&seq, &y, spec, &params);
            params.tensors_mut()[t].data_mut()[i] = orig - FD_EPS;
            let down = loss(&seq, &y, spec, &params);
            params.tensors_mut()[t].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * FD_EPS);
            let a = grad.data()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FD_FLOOR);
            checked += 1;
            if rel > worst.0 {
                worst = (rel, format!("{name}[{i}] analytic {a:e} numeric {numeric:e}"));
            }
        }
    }
    FdResult {
        max_rel_err: worst.0,
        worst: worst.1,
        checked,
    }
}

/// Linearly separable records: each sequence carries its class marker
/// (ids 2..=5) at two random positions among noise ids shared by all
/// classes.
pub fn separable_dataset(n: usize, seq_len: usize, seed: u64) -> EncodedDataset {
    let mut rng = SeededRng::new(seed);
    let vocab_size = 16;
    let records = (0..n)
        .map(|i| {
            let label = DamageLabel::ALL[i % 4];
            let mut ids: Vec<u32> = (0..seq_len).map(|_| 6 + rng.below(vocab_size - 6) as u32).collect();
            for _ in 0..2 {
                let at = rng.below(seq_len);
                ids[at] = 2 + label.code() as u32;
            }
            EncodedRecord {
                label,
                sequence: EncodedSequence { ids },
            }
        })
        .collect();
    EncodedDataset {
        seq_len,
        vocab_size,
        records,
    }
}
