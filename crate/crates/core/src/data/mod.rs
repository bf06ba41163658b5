//! Samples, datasets, task streams and rotation augmentation.

mod dataset;
mod io;
mod rotation;
mod synthetic;
mod tasks;

pub use dataset::{ClassId, Dataset, Sample, DEFAULT_HELDOUT_FRACTION};
pub use io::{load_dataset, save_dataset, DatasetFormat, DATASET_MAGIC};
pub use rotation::{augment_rotation, extended_label, rotate_image, RotatedSample, Rotation};
pub use synthetic::{generate_synthetic, templates, SyntheticSpec};
pub use tasks::{split_tasks, Protocol, StreamSession, Task, TaskPhase, TaskStream, TrainingWindow};
