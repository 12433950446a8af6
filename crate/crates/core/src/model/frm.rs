//! Feature refinement: a channel gate followed by a spatial gate.

use rand::Rng;

use super::layers::{join, Conv, NamedParams};
use super::{channel_axis, Result};
use crate::tensor::{
    add, concat, global_pool_channelwise, he_uniform, matmul, mul, relu, sigmoid, spatial_pool_across_channels,
    ConvParams, PoolKind, Tensor,
};

/// `C -> hidden -> C` perceptron without biases, shared by the average- and
/// max-pooled branches of the channel gate.
#[derive(Debug)]
pub struct SharedMlp {
    /// `[C, hidden]`
    pub w1: Tensor,
    /// `[hidden, C]`
    pub w2: Tensor,
}

impl SharedMlp {
    pub fn new(channels: usize, reduction: usize, rng: &mut impl Rng) -> Self {
        let hidden = (channels / reduction.max(1)).max(1);
        SharedMlp { w1: he_uniform(&[channels, hidden], channels, rng), w2: he_uniform(&[hidden, channels], hidden, rng) }
    }

    /// Rows of `x` are independent `[C]` vectors.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(matmul(&relu(&matmul(x, &self.w1)?), &self.w2)?)
    }
}

#[derive(Debug)]
pub struct Frm {
    pub mlp: SharedMlp,
    /// 2 -> 1 channels, 7x7x7, padding 3, with bias.
    pub spatial: Conv,
}

/// The two gates produced while refining one tensor.
#[derive(Debug, Clone)]
pub struct AttentionMaps {
    /// `[C]` or `[N, C]`
    pub channel_map: Tensor,
    /// `[1, D, H, W]` or `[N, 1, D, H, W]`
    pub spatial_map: Tensor,
}

impl Frm {
    pub fn new(channels: usize, reduction: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Frm {
            mlp: SharedMlp::new(channels, reduction, rng),
            spatial: Conv::new(ConvParams::same(2, 1, [7; 3], 1), true, rng)?,
        })
    }

    pub fn forward(&self, y: &Tensor) -> Result<Tensor> {
        Ok(self.forward_traced(y)?.0)
    }

    pub fn forward_traced(&self, y: &Tensor) -> Result<(Tensor, AttentionMaps)> {
        let channel_map = channel_attention(y, &self.mlp)?;
        let gate = if y.rank() == 5 { channel_map.reshape(&[y.shape()[0], y.shape()[1], 1, 1, 1])? } else { channel_map.clone() };
        let refined = mul(y, &gate)?;
        let spatial_map = spatial_attention(&refined, &self.spatial)?;
        let out = mul(&refined, &spatial_map)?;
        Ok((out, AttentionMaps { channel_map, spatial_map }))
    }

    pub(crate) fn collect(&self, prefix: &str, out: &mut NamedParams) {
        out.push((join(prefix, "mlp.w1"), self.mlp.w1.clone()));
        out.push((join(prefix, "mlp.w2"), self.mlp.w2.clone()));
        self.spatial.collect(&join(prefix, "spatial"), out);
    }
}

/// `sigmoid(MLP(avg_pool(y)) + MLP(max_pool(y)))`, one weight per channel.
pub fn channel_attention(y: &Tensor, mlp: &SharedMlp) -> Result<Tensor> {
    let avg = global_pool_channelwise(y, PoolKind::Avg)?;
    let max = global_pool_channelwise(y, PoolKind::Max)?;
    let pooled_shape = avg.shape().to_vec();
    let rows = if y.rank() == 5 { y.shape()[0] } else { 1 };
    let c = *pooled_shape.last().expect("pooled tensor has a channel axis");
    let a = mlp.forward(&avg.reshape(&[rows, c])?)?;
    let m = mlp.forward(&max.reshape(&[rows, c])?)?;
    Ok(sigmoid(&add(&a, &m)?).reshape(&pooled_shape)?)
}

/// `sigmoid(conv7(concat(mean over C, max over C)))`, one weight per voxel.
pub fn spatial_attention(y: &Tensor, conv: &Conv) -> Result<Tensor> {
    let avg = spatial_pool_across_channels(y, PoolKind::Avg)?;
    let max = spatial_pool_across_channels(y, PoolKind::Max)?;
    let stacked = concat(&[avg, max], channel_axis(y))?;
    Ok(sigmoid(&conv.forward(&stacked)?))
}

pub fn frm_forward(y: &Tensor, frm: &Frm) -> Result<Tensor> {
    frm.forward(y)
}
