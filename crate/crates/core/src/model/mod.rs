//! The segmentation network and its attention modules.
//!
//! Every module accepts a per-sample `[C, D, H, W]` tensor or a batched
//! `[N, C, D, H, W]` tensor. Parameters live in plain structs; a stable
//! hierarchical name for each is produced by [`NetworkState::named_parameters`].

mod config;
mod frm;
mod hfim;
mod layers;
mod network;
mod safa;

pub use config::{table2_configs, ModelConfig};
pub use frm::{channel_attention, frm_forward, spatial_attention, AttentionMaps, Frm, SharedMlp};
pub use hfim::{hfim_fuse_level, Hfim};
pub use layers::{BatchNorm, Conv, ConvBnRelu};
pub use network::{build_network, forward_full, NetworkState};
pub use safa::{safa_forward, Safa, SafaTrace, SelfAttention};

pub use crate::tensor::BatchNormMode as Mode;

use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("cannot parse model config: {0}")]
    ConfigSyntax(String),
    #[error("spatial extents {extents:?} must each be a multiple of {multiple}")]
    ExtentsNotDivisible { extents: [usize; 3], multiple: usize },
    #[error("expected an input with {expected} channel(s), got shape {shape:?}")]
    InputShape { expected: usize, shape: Vec<usize> },
    #[error("coarse extents {high:?} are not half of fine extents {low:?}")]
    Misaligned { low: Vec<usize>, high: Vec<usize> },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Channel axis of a per-sample or batched spatial tensor.
pub(crate) fn channel_axis(t: &crate::tensor::Tensor) -> usize {
    if t.rank() == 5 {
        1
    } else {
        0
    }
}
