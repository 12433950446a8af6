//! Optimisation, evaluation, checkpoints and the ablation harness.

mod ablation;
mod checkpoint;
mod optim;
mod run;
mod schedule;

pub use ablation::{run_ablation, AblationConfig, AblationRow, AblationTable};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use optim::{adam_step, AdamConfig, Moments, OptimizerState};
pub use run::{
    evaluate, predict_mask, predict_probabilities, train, BestState, EpochRecord, EvalConfig, Evaluation,
    SampleEvaluation, Snapshot, TrainConfig, Trainer, ValidationRecord, THRESHOLD,
};
pub use schedule::{lr_at, ScheduleState};

use thiserror::Error;

use crate::data::DataError;
use crate::metrics::MetricsError;
use crate::model::ModelError;
use crate::tensor::TensorError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("parameter {0} has no gradient")]
    MissingGradient(String),
    #[error("optimizer state does not match the network: {0}")]
    StateMismatch(String),
    #[error("non-finite loss {value} at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize, value: f64 },
    #[error("no samples to {0}")]
    EmptyDataset(&'static str),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// SplitMix64 finaliser; turns `(seed, counter)` pairs into well-mixed seeds.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
