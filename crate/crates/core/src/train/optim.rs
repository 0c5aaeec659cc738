//! Adam with bias correction.

use crate::nn::{Gradients, ModelParams};
use crate::tensor::{Tensor, TensorError};

use super::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    /// First and second moments, aligned with the parameter order.
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    /// Number of updates applied so far.
    pub t: u64,
}

impl AdamState {
    pub fn for_tensors<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let m: Vec<Tensor> = params.into_iter().map(Tensor::zeros_like).collect();
        Self {
            v: m.clone(),
            m,
            t: 0,
        }
    }

    pub fn new(params: &ModelParams) -> Self {
        Self::for_tensors(params.named().into_iter().map(|(_, t)| t))
    }
}

struct StepConsts {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    bc1: f64,
    bc2: f64,
}

#[inline]
fn update_slice(theta: &mut [f64], grad: Option<&[f64]>, m: &mut [f64], v: &mut [f64], k: &StepConsts) {
    for i in 0..theta.len() {
        let g = grad.map_or(0.0, |g| g[i]);
        m[i] = k.beta1 * m[i] + (1.0 - k.beta1) * g;
        v[i] = k.beta2 * v[i] + (1.0 - k.beta2) * g * g;
        let m_hat = m[i] / k.bc1;
        let v_hat = v[i] / k.bc2;
        theta[i] -= k.lr * m_hat / (v_hat.sqrt() + k.eps);
    }
}

fn begin_step(state: &mut AdamState, config: &TrainConfig) -> StepConsts {
    state.t += 1;
    let t = state.t as i32;
    StepConsts {
        lr: config.learning_rate,
        beta1: config.beta1,
        beta2: config.beta2,
        eps: config.epsilon,
        bc1: 1.0 - config.beta1.powi(t),
        bc2: 1.0 - config.beta2.powi(t),
    }
}

fn check(param: &Tensor, grad: &[usize], m: &Tensor) -> Result<(), TensorError> {
    if param.shape() != grad || param.shape() != m.shape() {
        return Err(TensorError::Shape {
            op: "adam_update",
            left: param.shape().to_vec(),
            right: grad.to_vec(),
        });
    }
    Ok(())
}

/// One Adam step over plain tensors. `t` is incremented once.
pub fn adam_update_tensors(
    params: &mut [&mut Tensor],
    grads: &[&Tensor],
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<(), TensorError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(TensorError::Shape {
            op: "adam_update",
            left: vec![params.len()],
            right: vec![grads.len()],
        });
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        check(p, g.shape(), m)?;
    }
    let k = begin_step(state, config);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        update_slice(p.data_mut(), Some(g.data()), state.m[i].data_mut(), state.v[i].data_mut(), &k);
    }
    Ok(())
}

/// One Adam step over a whole model. Embedding rows without a gradient
/// entry are treated as zero gradient (their moments still decay).
pub fn adam_update(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<(), TensorError> {
    let grad_net = grads.net.tensors();
    let mut tensors = params.tensors_mut();
    if tensors.len() != grad_net.len() + 1 || tensors.len() != state.m.len() {
        return Err(TensorError::Shape {
            op: "adam_update",
            left: vec![tensors.len()],
            right: vec![grad_net.len() + 1],
        });
    }
    check(tensors[0], &grads.embedding.shape(), &state.m[0])?;
    for ((p, g), m) in tensors[1..].iter().zip(&grad_net).zip(&state.m[1..]) {
        check(p, g.shape(), m)?;
    }
    let k = begin_step(state, config);

    let emb = &mut tensors[0];
    let cols = emb.cols();
    let (m0, v0) = (state.m[0].data_mut(), state.v[0].data_mut());
    for (r, theta) in emb.data_mut().chunks_exact_mut(cols).enumerate() {
        let range = r * cols..(r + 1) * cols;
        update_slice(theta, grads.embedding.row(r), &mut m0[range.clone()], &mut v0[range], &k);
    }
    for (i, (p, g)) in tensors[1..].iter_mut().zip(&grad_net).enumerate() {
        update_slice(
            p.data_mut(),
            Some(g.data()),
            state.m[i + 1].data_mut(),
            state.v[i + 1].data_mut(),
            &k,
        );
    }
    Ok(())
}
