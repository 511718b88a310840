//! Datasets: IDX and CIFAR binary ingestion, one-hot targets, deterministic
//! batching and synthetic regression fixtures.
//!
//! Pixels are scaled to [0, 1]; standardization is opt-in.

mod cifar;
mod dataset;
mod idx;
mod synth;

pub use cifar::{load_cifar10, parse_cifar};
pub use dataset::{one_hot, one_hot_batch, BatchPlan, Dataset, Targets};
pub use idx::{idx_dataset, load_idx, parse_idx, IMAGES_MAGIC, LABELS_MAGIC};
pub use synth::synth_linear;
