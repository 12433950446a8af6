//! Hierarchical fusion of adjacent decoder scales.

use rand::Rng;

use super::layers::{join, Conv, NamedParams};
use super::{channel_axis, ModelError, Result};
use crate::tensor::{concat, mul, sigmoid, upsample_trilinear2x, ConvParams, Tensor};

#[derive(Debug)]
pub struct Hfim {
    /// 1x1x1 projection of `concat(low, up(high))` to a single gate channel.
    pub gate: Conv,
    /// 3x3x3 convolution applied to the gated fine features.
    pub fuse: Conv,
}

impl Hfim {
    pub fn new(c_low: usize, c_high: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Hfim {
            gate: Conv::new(ConvParams::same(c_low + c_high, 1, [1; 3], 1), true, rng)?,
            fuse: Conv::new(ConvParams::same(c_low, c_low, [3; 3], 1), true, rng)?,
        })
    }

    pub(crate) fn collect(&self, prefix: &str, out: &mut NamedParams) {
        self.gate.collect(&join(prefix, "gate"), out);
        self.fuse.collect(&join(prefix, "fuse"), out);
    }
}

/// `conv3(sigmoid(proj(concat(y_low, up(y_high)))) * y_low)`.
///
/// `y_high` must have exactly half of `y_low`'s spatial extents.
pub fn hfim_fuse_level(y_low: &Tensor, y_high: &Tensor, hfim: &Hfim) -> Result<Tensor> {
    let (lo, hi) = (y_low.shape(), y_high.shape());
    let aligned = lo.len() == hi.len()
        && lo.len() >= 4
        && lo[..lo.len() - 4] == hi[..hi.len() - 4]
        && (1..=3).all(|a| lo[lo.len() - a] == 2 * hi[hi.len() - a]);
    if !aligned {
        return Err(ModelError::Misaligned { low: lo.to_vec(), high: hi.to_vec() });
    }
    let up = upsample_trilinear2x(y_high)?;
    let gate = sigmoid(&hfim.gate.forward(&concat(&[y_low.clone(), up], channel_axis(y_low))?)?);
    Ok(hfim.fuse.forward(&mul(y_low, &gate)?)?)
}
