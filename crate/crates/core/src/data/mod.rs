//! Volumes, masks, file formats, augmentation, phantoms and splits.

mod augment;
mod io;
mod manifest;
mod normalize;
mod phantom;
mod split;
mod volume;

pub use augment::{augment, crop, flip_width, rotate_axial, AugmentConfig, AugmentTrace, MAX_ROTATION_DEG};
pub use io::{load_mask, load_volume, save_mask, save_volume, FORMAT_MAGIC, FORMAT_VERSION};
pub use manifest::{Manifest, ManifestEntry};
pub use normalize::{normalize, Window};
pub use phantom::{generate_phantom, Centerline, Phantom, PhantomSpec};
pub use split::{kfold_split, Fold, VALIDATION_FRACTION};
pub use volume::{Geometry, LabelMask, Sample, Volume};

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("crop {crop:?} larger than volume {extents:?}")]
    CropTooLarge { crop: [usize; 3], extents: [usize; 3] },
    #[error("invalid augmentation: {0}")]
    InvalidAugment(String),
    #[error("invalid phantom spec: {0}")]
    InvalidPhantom(String),
    #[error("cannot split {ids} ids into {k} folds")]
    TooFewIds { ids: usize, k: usize },
    #[error("manifest: {0}")]
    Manifest(String),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Independent RNG stream for one sample: seeded from `seed` and an FNV-1a
/// hash of `id`, so workers can draw per-sample randomness in any order.
pub fn sample_rng(seed: u64, id: &str) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    crate::tensor::seeded_rng(seed ^ h.rotate_left(17))
}
