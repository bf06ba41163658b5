//! Exemplar-free class-incremental learning.
//!
//! A small, fully deterministic engine for class-incremental experiments
//! without stored exemplars: a hand-differentiated MLP, rotation
//! augmentation with label extension, feature distillation towards the
//! frozen initial extractor, nearest-class-mean evaluation, and the
//! accuracy-matrix metrics (average incremental accuracy, forgetting,
//! intransigence), plus the harness that runs and reports experiments.

pub mod data;
pub mod error;
pub mod eval;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod rng;
pub mod strategy;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
