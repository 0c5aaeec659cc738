//! The ten named architectures compared by the experiment harness.

use serde::{Deserialize, Serialize};

use crate::nn::{CellKind, ModelSpec, RecurrentLayerSpec};

/// Zoo order, which is also the row order of combined result tables.
pub const ZOO_NAMES: [&str; 10] = [
    "LSTM",
    "BLSTM",
    "sRNN",
    "GRU",
    "GRU-LSTM",
    "GRU-BLSTM",
    "sRNN-BLSTM",
    "sRNN-LSTM",
    "GRU-BLSTM-sRNN",
    "GRU-LSTM-sRNN",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZooWidths {
    pub embedding_dim: usize,
    pub hidden_units: usize,
    pub dense_hidden_units: usize,
    pub mask_padding: bool,
}

impl Default for ZooWidths {
    fn default() -> Self {
        Self {
            embedding_dim: 64,
            hidden_units: 64,
            dense_hidden_units: 64,
            mask_padding: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown model {name:?}; expected one of {}", ZOO_NAMES.join(", "))]
pub struct UnknownModel {
    pub name: String,
}

/// Canonical zoo spelling of `name`, matched case-insensitively.
pub fn canonical_name(name: &str) -> Result<&'static str, UnknownModel> {
    ZOO_NAMES
        .iter()
        .copied()
        .find(|z| z.eq_ignore_ascii_case(name.trim()))
        .ok_or_else(|| UnknownModel { name: name.to_string() })
}

fn layer(token: &str, hidden: usize) -> RecurrentLayerSpec {
    match token {
        "LSTM" => RecurrentLayerSpec::new(CellKind::Lstm, hidden),
        "BLSTM" => RecurrentLayerSpec::new(CellKind::Lstm, hidden).bidirectional(true),
        "sRNN" => RecurrentLayerSpec::new(CellKind::Srnn, hidden),
        "GRU" => RecurrentLayerSpec::new(CellKind::Gru, hidden),
        other => unreachable!("zoo token {other}"),
    }
}

pub fn zoo_spec(name: &str, widths: &ZooWidths) -> Result<ModelSpec, UnknownModel> {
    let name = canonical_name(name)?;
    let layers = name.split('-').map(|t| layer(t, widths.hidden_units)).collect();
    let mut spec = ModelSpec::stacked(name, widths.embedding_dim, layers, Some(widths.dense_hidden_units));
    spec.mask_padding = widths.mask_padding;
    Ok(spec)
}

pub fn model_zoo_with(widths: &ZooWidths) -> Vec<ModelSpec> {
    ZOO_NAMES
        .iter()
        .map(|n| zoo_spec(n, widths).expect("zoo names resolve"))
        .collect()
}

pub fn model_zoo() -> Vec<ModelSpec> {
    model_zoo_with(&ZooWidths::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_valid_specs() {
        let zoo = model_zoo();
        assert_eq!(zoo.len(), 10);
        for (spec, name) in zoo.iter().zip(ZOO_NAMES) {
            assert_eq!(spec.name, name);
            spec.validate().unwrap();
            assert_eq!(spec.embedding_dim, 64);
            assert_eq!(spec.dense_hidden_units, Some(64));
        }
        for spec in &zoo[..4] {
            assert_eq!(spec.recurrent_stack.len(), 1);
        }
    }

    #[test]
    fn stack_order() {
        let s = zoo_spec("GRU-BLSTM-sRNN", &ZooWidths::default()).unwrap();
        let kinds: Vec<_> = s.recurrent_stack.iter().map(|l| (l.kind, l.bidirectional)).collect();
        assert_eq!(
            kinds,
            [(CellKind::Gru, false), (CellKind::Lstm, true), (CellKind::Srnn, false)]
        );
        assert!(s.recurrent_stack[0].returns_sequence && !s.recurrent_stack[2].returns_sequence);
    }

    #[test]
    fn names() {
        assert_eq!(canonical_name("srnn-blstm").unwrap(), "sRNN-BLSTM");
        assert!(canonical_name("CNN").is_err());
        assert!(canonical_name("LSTM-GRU").is_err());
    }
}
