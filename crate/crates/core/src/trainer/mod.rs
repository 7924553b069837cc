//! Training on a trigger training set: reference learner, per-sample scores,
//! downsampling and the prefetching loader.

mod downsample;
mod learner;
mod loader;
mod scores;
mod train;

pub use downsample::{
    downsample_bts, downsample_stb, select_indices, DownsamplingConfig, DownsamplingMode, DownsamplingPolicy,
    StbSelector,
};
pub use learner::{argmax, softmax, ReferenceLearner};
pub use loader::{BytesParser, F32LeParser, Loader, LoaderConfig, LoaderStream, TrainingBatch};
pub use scores::{compute_scores, ScoreKind};
pub use train::{batch_gradient, train_on_trigger, BatchGradient, TrainOutcome, TrainingConfig};

use thiserror::Error;

use crate::selector::SelectorError;
use crate::storage::StorageError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("label {label} outside 0..{classes}")]
    InvalidLabel { label: i64, classes: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("trigger training set {0} is empty")]
    EmptySet(u32),
    #[error("diverged: {0}")]
    Diverged(String),
    #[error("loader failed on partition {partition}: {reason}")]
    Loader { partition: usize, reason: String },
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Selector(#[from] SelectorError),
}
