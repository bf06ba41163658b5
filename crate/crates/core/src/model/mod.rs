//! Incremental model lifecycle: head growth, frozen snapshots, class
//! prototypes and checkpoints.

mod checkpoint;
mod prototypes;
mod state;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use prototypes::{compute_prototypes, Prototype, PrototypeStore};
pub use state::{freeze_snapshot, Checksum, FeatureSource, FrozenExtractor, IncrementalModel};
