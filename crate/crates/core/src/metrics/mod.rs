//! Training loss, overlap metrics, surface distance and post-processing.

mod hausdorff;
mod loss;
mod morphology;
mod overlap;
mod report;

pub use hausdorff::{boundary, hausdorff_distance, percentile, HausdorffVariant};
pub use loss::{
    combined_loss, combined_loss_with_omega, dice_loss, weighted_ce_loss, weighted_ce_loss_with_omega, LossTerms,
    DEFAULT_EPSILON, DEFAULT_LAMBDA, PROB_CLAMP,
};
pub use morphology::{closing, connected_components, dilate, erode, largest_component, postprocess, Components};
pub use overlap::{confusion, overlap_metrics, ConfusionCounts, Overlap};
pub use report::MetricsReport;

use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("{which} mask is empty; the distance is undefined")]
    EmptyMask { which: &'static str },
    #[error("percentile {0} outside (0, 100]")]
    Percentile(f64),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, MetricsError>;
