//! Whole-model forward pass (embedding, recurrent stack, dense head,
//! softmax) and its exact gradient.

use crate::ingest::DamageLabel;
use crate::tensor::{mtv_acc, mv_acc, outer_acc, softmax, Tensor};
use crate::vocab::{EncodedSequence, PAD_ID};

use super::params::{expected_shapes, Gradients, ModelParams};
use super::recurrent::{layer_backward, layer_forward, LayerCache, LayerOutput};
use super::{ModelSpec, NnError, NUM_CLASSES};

/// Everything the backward pass needs from the forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    ids: Vec<u32>,
    vocab_size: usize,
    mask: Vec<bool>,
    /// Input sequence of each recurrent layer; entry 0 is the embedding
    /// output.
    layer_inputs: Vec<Vec<Vec<f64>>>,
    layer_caches: Vec<LayerCache>,
    features: Vec<f64>,
    hidden: Option<Vec<f64>>,
    pub logits: Vec<f64>,
    pub probs: [f64; NUM_CLASSES],
}

/// Row lookup per position; id 0 reads row 0 like any other token.
pub fn embedding_forward(seq: &EncodedSequence, embedding: &Tensor) -> Result<Vec<Vec<f64>>, NnError> {
    let vocab = embedding.rows();
    seq.ids
        .iter()
        .map(|&id| {
            if (id as usize) < vocab {
                Ok(embedding.row(id as usize).to_vec())
            } else {
                Err(NnError::IdOutOfRange {
                    id,
                    vocab_size: vocab,
                })
            }
        })
        .collect()
}

fn check_params(spec: &ModelSpec, params: &ModelParams) -> Result<(), NnError> {
    spec.validate()?;
    let shapes = expected_shapes(spec, params.vocab_size());
    let named = params.named();
    if named.len() != shapes.len() || named.iter().zip(&shapes).any(|((_, t), s)| t.shape() != s.as_slice()) {
        params.check_shapes(spec)?;
    }
    Ok(())
}

pub fn model_forward(
    seq: &EncodedSequence,
    spec: &ModelSpec,
    params: &ModelParams,
) -> Result<([f64; NUM_CLASSES], ForwardCache), NnError> {
    check_params(spec, params)?;
    if seq.ids.is_empty() {
        return Err(NnError::EmptySequence);
    }
    let embedded = embedding_forward(seq, &params.embedding)?;
    let mask: Vec<bool> = if spec.mask_padding {
        seq.ids.iter().map(|&id| id == PAD_ID).collect()
    } else {
        Vec::new()
    };

    let mut layer_inputs = vec![embedded];
    let mut layer_caches = Vec::with_capacity(spec.recurrent_stack.len());
    let mut features = Vec::new();
    for (layer, lp) in spec.recurrent_stack.iter().zip(&params.net.layers) {
        let input = layer_inputs.last().expect("embedding output present");
        let (out, cache) = layer_forward(layer, lp, input, &mask)?;
        layer_caches.push(cache);
        match out {
            LayerOutput::Sequence(s) => layer_inputs.push(s),
            LayerOutput::Final(f) => features = f,
        }
    }

    let hidden = params.net.dense_hidden.as_ref().map(|d| {
        let mut z = d.b.data().to_vec();
        mv_acc(d.w.data(), &features, &mut z);
        z.iter_mut().for_each(|v| *v = v.max(0.0));
        z
    });
    let head_in = hidden.as_deref().unwrap_or(&features);
    let mut logits = params.net.output.b.data().to_vec();
    mv_acc(params.net.output.w.data(), head_in, &mut logits);
    let p = softmax(&logits);
    let probs: [f64; NUM_CLASSES] = p.try_into().expect("four output classes");

    let cache = ForwardCache {
        ids: seq.ids.clone(),
        vocab_size: params.vocab_size(),
        mask,
        layer_inputs,
        layer_caches,
        features,
        hidden,
        logits,
        probs,
    };
    Ok((probs, cache))
}

/// Forward pass without keeping the cache.
pub fn predict_probs(
    seq: &EncodedSequence,
    spec: &ModelSpec,
    params: &ModelParams,
) -> Result<[f64; NUM_CLASSES], NnError> {
    model_forward(seq, spec, params).map(|(p, _)| p)
}

/// Gradient of `-ln p[label]` with respect to every parameter.
pub fn model_backward(
    cache: &ForwardCache,
    label: &[f64; NUM_CLASSES],
    spec: &ModelSpec,
    params: &ModelParams,
) -> Result<Gradients, NnError> {
    if cache.vocab_size != params.vocab_size()
        || cache.layer_caches.len() != params.net.layers.len()
        || cache.layer_caches.len() != spec.recurrent_stack.len()
        || cache.hidden.is_some() != params.net.dense_hidden.is_some()
        || cache.layer_inputs[0].first().map(Vec::len) != Some(params.embedding.cols())
    {
        return Err(NnError::CacheMismatch(format!(
            "cache has {} layers over vocabulary {}, params have {} layers over {}",
            cache.layer_caches.len(),
            cache.vocab_size,
            params.net.layers.len(),
            params.vocab_size()
        )));
    }
    let mut grads = Gradients::zeros_like(params);
    let net = &params.net;

    let dlogits: Vec<f64> = cache.probs.iter().zip(label).map(|(p, y)| p - y).collect();
    let head_in = cache.hidden.as_deref().unwrap_or(&cache.features);
    outer_acc(grads.net.output.w.data_mut(), &dlogits, head_in);
    add_into(grads.net.output.b.data_mut(), &dlogits);
    let mut d_head_in = vec![0.0; head_in.len()];
    mtv_acc(net.output.w.data(), &dlogits, &mut d_head_in);

    let d_features = match (&net.dense_hidden, &cache.hidden, &mut grads.net.dense_hidden) {
        (Some(dense), Some(hidden), Some(g)) => {
            let dz: Vec<f64> = d_head_in
                .iter()
                .zip(hidden)
                .map(|(d, &a)| if a > 0.0 { *d } else { 0.0 })
                .collect();
            outer_acc(g.w.data_mut(), &dz, &cache.features);
            add_into(g.b.data_mut(), &dz);
            let mut df = vec![0.0; cache.features.len()];
            mtv_acc(dense.w.data(), &dz, &mut df);
            df
        }
        _ => d_head_in,
    };

    let mut d_out = LayerOutput::Final(d_features);
    for k in (0..spec.recurrent_stack.len()).rev() {
        let d_in = layer_backward(
            &spec.recurrent_stack[k],
            &net.layers[k],
            &mut grads.net.layers[k],
            &cache.layer_inputs[k],
            &cache.layer_caches[k],
            &d_out,
        );
        d_out = LayerOutput::Sequence(d_in);
    }
    let d_embedded = d_out.into_sequence().expect("stack is non-empty");
    for (pos, (&id, d)) in cache.ids.iter().zip(&d_embedded).enumerate() {
        if cache.mask.get(pos).copied().unwrap_or(false) {
            continue;
        }
        grads.embedding.add_row(id as usize, d);
    }
    Ok(grads)
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}

/// Index of the largest probability; ties go to the lowest index.
pub fn predict_class(probs: &[f64]) -> DamageLabel {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().take(NUM_CLASSES) {
        if p > probs[best] {
            best = i;
        }
    }
    DamageLabel::from_code(best).expect("class index below four")
}
