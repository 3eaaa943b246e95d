//! Minifinetuning: per-token corrective self-distillation for language model
//! domain adaptation, at desk scale.
//!
//! The crate bundles everything needed to study the specialization /
//! degeneralization trade-off of finetuning a small causal LM:
//!
//! - [`numerics`]: tensors, a reverse-mode tape, Adam, gradient checking;
//! - [`correction`]: the per-token distribution-correction function that turns
//!   a frozen teacher's predictions into training targets;
//! - [`model`]: a tiny byte-level transformer with optional low-rank adapters;
//! - [`data`]: corpus loading, packing, deterministic batching, replay mixing;
//! - [`training`]: the teacher-student loop, checkpointing, best-checkpoint
//!   selection;
//! - [`experiment`]: perplexity, specialization/degeneralization metrics,
//!   sweeps, and report emission.

pub mod correction;
pub mod data;
pub mod error;
pub mod experiment;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{MftError, Result};
