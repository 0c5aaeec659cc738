//! Unrolling cells over a sequence, in one or both directions.

use super::cell::{self, CellState, StepCache};
use super::{Activation, CellKind, CellParams, LayerParams, NnError, RecurrentLayerSpec};

/// Output of a recurrent layer: the per-position sequence or the final
/// state.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerOutput {
    Sequence(Vec<Vec<f64>>),
    Final(Vec<f64>),
}

impl LayerOutput {
    pub fn into_sequence(self) -> Option<Vec<Vec<f64>>> {
        match self {
            LayerOutput::Sequence(s) => Some(s),
            LayerOutput::Final(_) => None,
        }
    }

    pub fn into_final(self) -> Option<Vec<f64>> {
        match self {
            LayerOutput::Final(v) => Some(v),
            LayerOutput::Sequence(_) => None,
        }
    }
}

/// One direction's pass over the sequence. Index `s` is the processing
/// step; `position(s)` maps it to the input position.
#[derive(Debug, Clone)]
pub(crate) struct DirectionCache {
    reverse: bool,
    states: Vec<CellState>,
    steps: Vec<StepCache>,
    masked: Vec<bool>,
}

impl DirectionCache {
    fn position(&self, s: usize) -> usize {
        if self.reverse {
            self.states.len() - 1 - s
        } else {
            s
        }
    }

    /// Hidden state emitted at input position `pos`.
    fn h_at(&self, pos: usize) -> &[f64] {
        let s = if self.reverse {
            self.states.len() - 1 - pos
        } else {
            pos
        };
        &self.states[s].h
    }

    fn last_h(&self) -> &[f64] {
        &self.states.last().expect("non-empty sequence").h
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LayerCache {
    pub(crate) directions: Vec<DirectionCache>,
}

fn run_direction(
    kind: CellKind,
    act: Activation,
    p: &CellParams,
    inputs: &[Vec<f64>],
    mask: &[bool],
    reverse: bool,
) -> DirectionCache {
    let len = inputs.len();
    let hidden = p.hidden();
    let mut states = Vec::with_capacity(len);
    let mut steps = Vec::with_capacity(len);
    let mut masked = Vec::with_capacity(len);
    let zero = CellState::zeros(kind, hidden);
    for s in 0..len {
        let pos = if reverse { len - 1 - s } else { s };
        let prev = states.last().unwrap_or(&zero);
        let skip = mask.get(pos).copied().unwrap_or(false);
        if skip {
            let carried: CellState = prev.clone();
            states.push(carried);
            steps.push(StepCache::default());
        } else {
            let (h, c, cache) = cell::forward(kind, act, p, &inputs[pos], &prev.h, &prev.c);
            states.push(CellState { h, c });
            steps.push(cache);
        }
        masked.push(skip);
    }
    DirectionCache {
        reverse,
        states,
        steps,
        masked,
    }
}

/// Backpropagates one direction. `d_seq` (per position, this direction's
/// slice already extracted) and `d_final` are both optional.
#[allow(clippy::too_many_arguments)]
fn backprop_direction(
    kind: CellKind,
    act: Activation,
    p: &CellParams,
    grad: &mut CellParams,
    inputs: &[Vec<f64>],
    cache: &DirectionCache,
    d_seq: Option<&[Vec<f64>]>,
    d_final: Option<&[f64]>,
    d_inputs: &mut [Vec<f64>],
) {
    let len = inputs.len();
    let hidden = p.hidden();
    let zero = CellState::zeros(kind, hidden);
    let mut dh = vec![0.0; hidden];
    let mut dc = vec![0.0; if kind == CellKind::Lstm { hidden } else { 0 }];
    for s in (0..len).rev() {
        let pos = cache.position(s);
        if let Some(seq) = d_seq {
            dh.iter_mut().zip(&seq[pos]).for_each(|(a, b)| *a += b);
        }
        if s == len - 1 {
            if let Some(fin) = d_final {
                dh.iter_mut().zip(fin).for_each(|(a, b)| *a += b);
            }
        }
        if cache.masked[s] {
            continue;
        }
        let prev = if s == 0 { &zero } else { &cache.states[s - 1] };
        let (dh_prev, dc_prev) = cell::backward(
            kind,
            act,
            p,
            grad,
            &inputs[pos],
            &prev.h,
            &prev.c,
            &cache.states[s].h,
            &cache.steps[s],
            &dh,
            &dc,
            &mut d_inputs[pos],
        );
        dh = dh_prev;
        dc = dc_prev;
    }
}

fn check_inputs(inputs: &[Vec<f64>], p: &CellParams) -> Result<(), NnError> {
    if inputs.is_empty() {
        return Err(NnError::EmptySequence);
    }
    if let Some(bad) = inputs.iter().find(|x| x.len() != p.input()) {
        return Err(NnError::InputWidth {
            expected: p.input(),
            found: bad.len(),
        });
    }
    Ok(())
}

pub(crate) fn layer_forward(
    spec: &RecurrentLayerSpec,
    params: &LayerParams,
    inputs: &[Vec<f64>],
    mask: &[bool],
) -> Result<(LayerOutput, LayerCache), NnError> {
    check_inputs(inputs, &params.forward)?;
    let expected_hidden = spec.kind.gates() * spec.hidden_units;
    if params.forward.w.rows() != expected_hidden {
        return Err(NnError::ParamShape {
            name: "recurrent w".into(),
            expected: vec![expected_hidden, params.forward.input()],
            found: params.forward.w.shape().to_vec(),
        });
    }
    let mut directions = vec![run_direction(
        spec.kind,
        spec.activation,
        &params.forward,
        inputs,
        mask,
        false,
    )];
    if spec.bidirectional {
        let bwd = params.backward.as_ref().ok_or_else(|| NnError::ParamShape {
            name: "recurrent backward cell".into(),
            expected: vec![expected_hidden, params.forward.input()],
            found: vec![],
        })?;
        check_inputs(inputs, bwd)?;
        directions.push(run_direction(spec.kind, spec.activation, bwd, inputs, mask, true));
    }
    let output = if spec.returns_sequence {
        LayerOutput::Sequence(
            (0..inputs.len())
                .map(|pos| directions.iter().flat_map(|d| d.h_at(pos).iter().copied()).collect())
                .collect(),
        )
    } else {
        LayerOutput::Final(directions.iter().flat_map(|d| d.last_h().iter().copied()).collect())
    };
    Ok((output, LayerCache { directions }))
}

/// Returns the gradient with respect to the layer inputs and accumulates
/// parameter gradients into `grads`.
pub(crate) fn layer_backward(
    spec: &RecurrentLayerSpec,
    params: &LayerParams,
    grads: &mut LayerParams,
    inputs: &[Vec<f64>],
    cache: &LayerCache,
    d_output: &LayerOutput,
) -> Vec<Vec<f64>> {
    let h = spec.hidden_units;
    let mut d_inputs = vec![vec![0.0; params.forward.input()]; inputs.len()];
    let cells = [Some((&params.forward, &mut grads.forward)), params.backward.as_ref().zip(grads.backward.as_mut())];
    for (dir, ((p, g), dcache)) in cells.into_iter().flatten().zip(&cache.directions).enumerate() {
        let range = dir * h..(dir + 1) * h;
        match d_output {
            LayerOutput::Sequence(seq) => {
                let part: Vec<Vec<f64>> = seq.iter().map(|v| v[range.clone()].to_vec()).collect();
                backprop_direction(spec.kind, spec.activation, p, g, inputs, dcache, Some(&part), None, &mut d_inputs);
            }
            LayerOutput::Final(v) => {
                backprop_direction(spec.kind, spec.activation, p, g, inputs, dcache, None, Some(&v[range]), &mut d_inputs);
            }
        }
    }
    d_inputs
}

/// Runs one (unidirectional) layer left to right from zero initial state.
/// Padding positions are processed like any other input.
pub fn recurrent_forward(
    inputs: &[Vec<f64>],
    layer: &RecurrentLayerSpec,
    params: &CellParams,
) -> Result<LayerOutput, NnError> {
    let spec = RecurrentLayerSpec {
        bidirectional: false,
        ..layer.clone()
    };
    let lp = LayerParams {
        forward: params.clone(),
        backward: None,
    };
    Ok(layer_forward(&spec, &lp, inputs, &[])?.0)
}

/// Runs a bidirectional layer: the forward cell over positions `0..L`, the
/// backward cell over `L..0`, outputs concatenated `[fwd | bwd]`.
pub fn bidirectional_forward(
    inputs: &[Vec<f64>],
    layer: &RecurrentLayerSpec,
    params_fwd: &CellParams,
    params_bwd: &CellParams,
) -> Result<LayerOutput, NnError> {
    if !layer.bidirectional {
        return Err(NnError::Spec {
            name: format!("{:?} layer", layer.kind),
            reason: "bidirectional_forward needs a bidirectional layer".into(),
        });
    }
    let lp = LayerParams {
        forward: params_fwd.clone(),
        backward: Some(params_bwd.clone()),
    };
    Ok(layer_forward(layer, &lp, inputs, &[])?.0)
}
