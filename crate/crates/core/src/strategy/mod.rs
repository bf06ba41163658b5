//! Training procedures: the shared initial recipe, rotation-augmented
//! distillation, plain finetuning, the frozen-extractor baseline, and the
//! jointly trained reference model used for intransigence.

mod config;
mod reference;
mod runs;
mod trainer;

pub use config::{DistillMode, EpochLog, EvalMode, Strategy, TrainConfig};
pub use reference::{train_reference, ReferenceCache, ReferenceKey};
pub use runs::{run_featstar, run_sequential, run_strategy, StrategyRun};
pub use trainer::{train_initial, train_task_finetune, train_task_rad};
