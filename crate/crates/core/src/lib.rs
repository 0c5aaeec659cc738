//! Damage-level classification of aviation occurrence narratives with
//! recurrent networks written from scratch.
//!
//! The pipeline runs: [`ingest`] (load and filter reports), [`text`] and
//! [`vocab`] (normalize, tokenize, encode to fixed-length id sequences),
//! [`nn`] (embedding, sRNN/LSTM/GRU stacks, dense head, BPTT),
//! [`train`] (split, cross-entropy, Adam, mini-batch loop), [`eval`]
//! (confusion matrix, metrics, result tables) and [`experiment`] (model zoo,
//! checkpoints, the ten-model comparison run).

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod fixture;
pub mod ingest;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod text;
pub mod train;
pub mod vocab;
pub mod zoo;

pub use error::Error;
pub use ingest::{DamageLabel, OccurrenceRecord};
pub use nn::{ModelParams, ModelSpec};
