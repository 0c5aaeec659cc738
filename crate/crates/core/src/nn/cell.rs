//! Single-timestep cell updates and their exact local gradients.
//!
//! sRNN: `h = act(W x + U h' + b)`
//!
//! LSTM: `i, f, o = sigmoid(W x + U h' + b)`, `g = act(...)`,
//! `c = f * c' + i * g`, `h = o * act(c)`
//!
//! GRU: `z, r = sigmoid(W x + U h' + b)`, `n = act(W_n x + U_n (r * h') + b_n)`,
//! `h = (1 - z) * h' + z * n`

use crate::tensor::{mtv_acc, mv_acc, outer_acc, sigmoid};

use super::{Activation, CellKind, CellParams, NnError};

/// Recurrent state carried between steps. `c` is empty except for LSTM.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl CellState {
    pub fn zeros(kind: CellKind, hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: if kind == CellKind::Lstm {
                vec![0.0; hidden]
            } else {
                Vec::new()
            },
        }
    }
}

/// Values saved by the forward step for the backward step.
#[derive(Debug, Clone, Default)]
pub(crate) struct StepCache {
    /// Post-activation gate values: LSTM `[i f g o]`, GRU `[z r n]`, empty
    /// for sRNN (the output is the activation).
    pub gates: Vec<f64>,
    /// LSTM: `act(c)`. GRU: `r * h'`. Empty for sRNN.
    pub aux: Vec<f64>,
}

fn check_dims(params: &CellParams, kind: CellKind, x: &[f64], h_prev: &[f64]) -> Result<(), NnError> {
    let hidden = params.hidden();
    if params.w.rows() != kind.gates() * hidden {
        return Err(NnError::ParamShape {
            name: format!("{kind:?} w"),
            expected: vec![kind.gates() * hidden, params.input()],
            found: params.w.shape().to_vec(),
        });
    }
    if x.len() != params.input() {
        return Err(NnError::InputWidth {
            expected: params.input(),
            found: x.len(),
        });
    }
    if h_prev.len() != hidden {
        return Err(NnError::InputWidth {
            expected: hidden,
            found: h_prev.len(),
        });
    }
    Ok(())
}

pub fn srnn_step(
    x: &[f64],
    h_prev: &[f64],
    params: &CellParams,
    act: Activation,
) -> Result<Vec<f64>, NnError> {
    check_dims(params, CellKind::Srnn, x, h_prev)?;
    Ok(forward(CellKind::Srnn, act, params, x, h_prev, &[]).0)
}

pub fn lstm_step(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    params: &CellParams,
    act: Activation,
) -> Result<(Vec<f64>, Vec<f64>), NnError> {
    check_dims(params, CellKind::Lstm, x, h_prev)?;
    if c_prev.len() != h_prev.len() {
        return Err(NnError::InputWidth {
            expected: h_prev.len(),
            found: c_prev.len(),
        });
    }
    let (h, c, _) = forward(CellKind::Lstm, act, params, x, h_prev, c_prev);
    Ok((h, c))
}

pub fn gru_step(
    x: &[f64],
    h_prev: &[f64],
    params: &CellParams,
    act: Activation,
) -> Result<Vec<f64>, NnError> {
    check_dims(params, CellKind::Gru, x, h_prev)?;
    Ok(forward(CellKind::Gru, act, params, x, h_prev, &[]).0)
}

/// Unchecked forward step; returns `(h, c, cache)`.
pub(crate) fn forward(
    kind: CellKind,
    act: Activation,
    p: &CellParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> (Vec<f64>, Vec<f64>, StepCache) {
    let hd = h_prev.len();
    let mut pre = p.b.data().to_vec();
    mv_acc(p.w.data(), x, &mut pre);
    match kind {
        CellKind::Srnn => {
            mv_acc(p.u.data(), h_prev, &mut pre);
            let h = pre.into_iter().map(|v| act.apply(v)).collect();
            (h, Vec::new(), StepCache::default())
        }
        CellKind::Lstm => {
            mv_acc(p.u.data(), h_prev, &mut pre);
            let mut gates = pre;
            for (k, v) in gates.iter_mut().enumerate() {
                *v = if (2 * hd..3 * hd).contains(&k) {
                    act.apply(*v)
                } else {
                    sigmoid(*v)
                };
            }
            let (i, rest) = gates.split_at(hd);
            let (f, rest) = rest.split_at(hd);
            let (g, o) = rest.split_at(hd);
            let c: Vec<f64> = (0..hd).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
            let tc: Vec<f64> = c.iter().map(|&v| act.apply(v)).collect();
            let h = (0..hd).map(|k| o[k] * tc[k]).collect();
            (h, c, StepCache { gates, aux: tc })
        }
        CellKind::Gru => {
            let u = p.u.data();
            mv_acc(&u[..2 * hd * hd], h_prev, &mut pre[..2 * hd]);
            for v in &mut pre[..2 * hd] {
                *v = sigmoid(*v);
            }
            let rh: Vec<f64> = (0..hd).map(|k| pre[hd + k] * h_prev[k]).collect();
            mv_acc(&u[2 * hd * hd..], &rh, &mut pre[2 * hd..]);
            for v in &mut pre[2 * hd..] {
                *v = act.apply(*v);
            }
            let gates = pre;
            let h = (0..hd)
                .map(|k| {
                    let z = gates[k];
                    (1.0 - z) * h_prev[k] + z * gates[2 * hd + k]
                })
                .collect();
            (h, Vec::new(), StepCache { gates, aux: rh })
        }
    }
}

/// Backward through one step. Accumulates parameter gradients into `grad`
/// and `dx`; returns `(dh_prev, dc_prev)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward(
    kind: CellKind,
    act: Activation,
    p: &CellParams,
    grad: &mut CellParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    h: &[f64],
    cache: &StepCache,
    dh: &[f64],
    dc: &[f64],
    dx: &mut [f64],
) -> (Vec<f64>, Vec<f64>) {
    let hd = h_prev.len();
    let mut dh_prev = vec![0.0; hd];
    let mut dc_prev = Vec::new();
    let dpre: Vec<f64> = match kind {
        CellKind::Srnn => {
            let dpre: Vec<f64> = (0..hd).map(|k| dh[k] * act.grad_from_output(h[k])).collect();
            mtv_acc(p.u.data(), &dpre, &mut dh_prev);
            outer_acc(grad.u.data_mut(), &dpre, h_prev);
            dpre
        }
        CellKind::Lstm => {
            let g = &cache.gates;
            let tc = &cache.aux;
            let mut dpre = vec![0.0; 4 * hd];
            dc_prev = vec![0.0; hd];
            for k in 0..hd {
                let (i, f, gg, o) = (g[k], g[hd + k], g[2 * hd + k], g[3 * hd + k]);
                let d_o = dh[k] * tc[k];
                let dct = dc[k] + dh[k] * o * act.grad_from_output(tc[k]);
                dpre[k] = dct * gg * i * (1.0 - i);
                dpre[hd + k] = dct * c_prev[k] * f * (1.0 - f);
                dpre[2 * hd + k] = dct * i * act.grad_from_output(gg);
                dpre[3 * hd + k] = d_o * o * (1.0 - o);
                dc_prev[k] = dct * f;
            }
            mtv_acc(p.u.data(), &dpre, &mut dh_prev);
            outer_acc(grad.u.data_mut(), &dpre, h_prev);
            dpre
        }
        CellKind::Gru => {
            let g = &cache.gates;
            let rh = &cache.aux;
            let u = p.u.data();
            let mut dpre = vec![0.0; 3 * hd];
            for k in 0..hd {
                let (z, n) = (g[k], g[2 * hd + k]);
                dh_prev[k] = dh[k] * (1.0 - z);
                dpre[k] = dh[k] * (n - h_prev[k]) * z * (1.0 - z);
                dpre[2 * hd + k] = dh[k] * z * act.grad_from_output(n);
            }
            let mut drh = vec![0.0; hd];
            mtv_acc(&u[2 * hd * hd..], &dpre[2 * hd..], &mut drh);
            outer_acc(&mut grad.u.data_mut()[2 * hd * hd..], &dpre[2 * hd..], rh);
            for k in 0..hd {
                let r = g[hd + k];
                dh_prev[k] += drh[k] * r;
                dpre[hd + k] = drh[k] * h_prev[k] * r * (1.0 - r);
            }
            mtv_acc(&u[..2 * hd * hd], &dpre[..2 * hd], &mut dh_prev);
            outer_acc(&mut grad.u.data_mut()[..2 * hd * hd], &dpre[..2 * hd], h_prev);
            dpre
        }
    };
    outer_acc(grad.w.data_mut(), &dpre, x);
    grad.b
        .data_mut()
        .iter_mut()
        .zip(&dpre)
        .for_each(|(b, d)| *b += d);
    mtv_acc(p.w.data(), &dpre, dx);
    (dh_prev, dc_prev)
}
