//! Embedding, recurrent cells (simple, LSTM, GRU), bidirectional wrapper,
//! dense head, and exact backpropagation through time.
//!
//! Gate weights of a cell are stored stacked in one matrix per role:
//!
//! | cell | gate blocks (in row order) | `w` shape      | `u` shape      | `b` shape |
//! |------|----------------------------|----------------|----------------|-----------|
//! | sRNN | `a`                        | `[H, d]`       | `[H, H]`       | `[H]`     |
//! | LSTM | `i, f, g, o`               | `[4H, d]`      | `[4H, H]`      | `[4H]`    |
//! | GRU  | `z, r, n`                  | `[3H, d]`      | `[3H, H]`      | `[3H]`    |
//!
//! `d` is the layer input width: the embedding width for the first layer,
//! otherwise the previous layer's output width (`H`, or `2H` when that
//! layer is bidirectional). A bidirectional layer carries a second,
//! independently initialised set for the right-to-left pass.

mod cell;
mod model;
mod params;
mod recurrent;

use serde::{Deserialize, Serialize};

pub use cell::{gru_step, lstm_step, srnn_step, CellState};
pub use model::{
    embedding_forward, model_backward, model_forward, predict_class, predict_probs, ForwardCache,
};
pub use params::{CellParams, DenseParams, Gradients, LayerParams, ModelParams, NetworkWeights, SparseRows};
pub use recurrent::{bidirectional_forward, recurrent_forward, LayerOutput};

use crate::tensor::TensorError;

pub const NUM_CLASSES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellKind {
    #[serde(rename = "SRNN")]
    Srnn,
    #[serde(rename = "LSTM")]
    Lstm,
    #[serde(rename = "GRU")]
    Gru,
}

impl CellKind {
    /// Number of stacked gate blocks in the weight matrices.
    pub fn gates(self) -> usize {
        match self {
            CellKind::Srnn => 1,
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }

    /// Default candidate/state activation.
    pub fn default_activation(self) -> Activation {
        match self {
            CellKind::Srnn => Activation::Relu,
            CellKind::Lstm | CellKind::Gru => Activation::Tanh,
        }
    }
}

/// Candidate/state nonlinearity. Gates always use the logistic sigmoid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    pub fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecurrentLayerSpec {
    pub kind: CellKind,
    pub hidden_units: usize,
    pub bidirectional: bool,
    pub returns_sequence: bool,
    pub activation: Activation,
}

impl RecurrentLayerSpec {
    pub fn new(kind: CellKind, hidden_units: usize) -> Self {
        Self {
            kind,
            hidden_units,
            bidirectional: false,
            returns_sequence: false,
            activation: kind.default_activation(),
        }
    }

    pub fn bidirectional(mut self, on: bool) -> Self {
        self.bidirectional = on;
        self
    }

    pub fn directions(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    pub fn output_width(&self) -> usize {
        self.hidden_units * self.directions()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub embedding_dim: usize,
    pub recurrent_stack: Vec<RecurrentLayerSpec>,
    /// Width of the ReLU dense layer before the softmax; `None` feeds the
    /// recurrent output straight to the output layer.
    pub dense_hidden_units: Option<usize>,
    pub num_classes: usize,
    /// When set, padding steps (id 0) carry the previous state unchanged.
    #[serde(default)]
    pub mask_padding: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("invalid model spec {name:?}: {reason}")]
    Spec { name: String, reason: String },
    #[error("token id {id} out of range for vocabulary of {vocab_size}")]
    IdOutOfRange { id: u32, vocab_size: usize },
    #[error("parameter {name} has shape {found:?}, expected {expected:?}")]
    ParamShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("input width {found} does not match layer input width {expected}")]
    InputWidth { expected: usize, found: usize },
    #[error("empty input sequence")]
    EmptySequence,
    #[error("forward cache does not belong to these parameters: {0}")]
    CacheMismatch(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl ModelSpec {
    /// Builds a spec from an ordered list of layers; every layer except the
    /// last returns its full sequence.
    pub fn stacked(
        name: impl Into<String>,
        embedding_dim: usize,
        layers: Vec<RecurrentLayerSpec>,
        dense_hidden_units: Option<usize>,
    ) -> Self {
        let n = layers.len();
        let recurrent_stack = layers
            .into_iter()
            .enumerate()
            .map(|(i, mut l)| {
                l.returns_sequence = i + 1 < n;
                l
            })
            .collect();
        Self {
            name: name.into(),
            embedding_dim,
            recurrent_stack,
            dense_hidden_units,
            num_classes: NUM_CLASSES,
            mask_padding: false,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let fail = |reason: String| {
            Err(NnError::Spec {
                name: self.name.clone(),
                reason,
            })
        };
        if self.num_classes != NUM_CLASSES {
            return fail(format!("num_classes must be {NUM_CLASSES}"));
        }
        if self.embedding_dim == 0 {
            return fail("embedding_dim must be positive".into());
        }
        if self.recurrent_stack.is_empty() {
            return fail("recurrent stack is empty".into());
        }
        if self.dense_hidden_units == Some(0) {
            return fail("dense_hidden_units must be positive".into());
        }
        let last = self.recurrent_stack.len() - 1;
        for (i, layer) in self.recurrent_stack.iter().enumerate() {
            if layer.hidden_units == 0 {
                return fail(format!("layer {i} has zero hidden units"));
            }
            if layer.returns_sequence != (i != last) {
                return fail(format!(
                    "layer {i} returns_sequence must be {}",
                    i != last
                ));
            }
        }
        Ok(())
    }

    /// Input width of each recurrent layer.
    pub fn layer_input_widths(&self) -> Vec<usize> {
        let mut widths = Vec::with_capacity(self.recurrent_stack.len());
        let mut d = self.embedding_dim;
        for layer in &self.recurrent_stack {
            widths.push(d);
            d = layer.output_width();
        }
        widths
    }

    pub fn recurrent_output_width(&self) -> usize {
        self.recurrent_stack
            .last()
            .map_or(self.embedding_dim, RecurrentLayerSpec::output_width)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stacked_sets_sequence_flags() {
        let spec = ModelSpec::stacked(
            "x",
            8,
            vec![
                RecurrentLayerSpec::new(CellKind::Gru, 4),
                RecurrentLayerSpec::new(CellKind::Lstm, 5).bidirectional(true),
                RecurrentLayerSpec::new(CellKind::Srnn, 3),
            ],
            Some(6),
        );
        spec.validate().unwrap();
        let flags: Vec<bool> = spec.recurrent_stack.iter().map(|l| l.returns_sequence).collect();
        assert_eq!(flags, vec![true, true, false]);
        assert_eq!(spec.layer_input_widths(), vec![8, 4, 10]);
        assert_eq!(spec.recurrent_output_width(), 3);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = ModelSpec::stacked("bad", 4, vec![RecurrentLayerSpec::new(CellKind::Lstm, 2)], None);
        spec.recurrent_stack[0].returns_sequence = true;
        assert!(spec.validate().is_err());
        let empty = ModelSpec::stacked("e", 4, vec![], None);
        assert!(empty.validate().is_err());
        let mut classes = ModelSpec::stacked("c", 4, vec![RecurrentLayerSpec::new(CellKind::Gru, 2)], None);
        classes.num_classes = 3;
        assert!(classes.validate().is_err());
    }

    #[test]
    fn default_activations() {
        assert_eq!(CellKind::Srnn.default_activation(), Activation::Relu);
        assert_eq!(CellKind::Lstm.default_activation(), Activation::Tanh);
        assert_eq!(CellKind::Gru.default_activation(), Activation::Tanh);
    }
}
