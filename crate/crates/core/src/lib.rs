//! Faithful multimodal explanations for VQA on a synthetic scene world.
//!
//! The pipeline: generate scenes with known causal structure, pretrain and
//! freeze an attention VQA model, train a textual explanation decoder,
//! score explanations for faithfulness with gradient attribution, filter
//! the training stream by that score, and audit the result with LIME and
//! attention transport metrics.

pub mod error;
pub mod eval;
pub mod explainer;
pub mod faithfulness;
pub mod lime;
pub mod linker;
pub mod metrics;
pub mod nn;
pub mod par;
pub mod rng;
pub mod toyworld;
pub mod trainer;
pub mod vqa;

pub use error::{Error, Result};
