//! Attention-guided, feature-aggregated 3D segmentation network for tubular
//! structures, built on a small reverse-mode autodiff tensor engine.
//!
//! * [`tensor`]: tensors, differentiable primitives, gradient checking.
//! * [`model`]: feature refinement, scale-adaptive augmentation, hierarchical
//!   fusion and the U-shaped network that assembles them.
//! * [`metrics`]: composite loss, overlap metrics, Hausdorff distance and
//!   morphological post-processing.
//! * [`data`]: volume files, normalization, augmentation, synthetic vessel
//!   phantoms and cross-validation splits.
//! * [`train`]: Adam, warm-restart cosine schedule, training loop,
//!   evaluation, checkpoints and the ablation harness.

pub mod data;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod train;
