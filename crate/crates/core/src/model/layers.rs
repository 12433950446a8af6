use std::cell::RefCell;

use rand::Rng;

use super::{Mode, Result};
use crate::tensor::{self, batch_norm, conv3d, he_uniform, relu, ConvParams, RunningStats, Tensor};

pub(crate) type NamedParams = Vec<(String, Tensor)>;
pub(crate) type NamedStats<'a> = Vec<(String, &'a RefCell<RunningStats>)>;

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// A 3D convolution with He-uniform weights and an optional zero bias.
#[derive(Debug)]
pub struct Conv {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
    pub params: ConvParams,
}

impl Conv {
    pub fn new(params: ConvParams, bias: bool, rng: &mut impl Rng) -> Result<Self> {
        params.validate()?;
        let fan_in = params.in_channels * params.kernel_volume();
        Ok(Conv {
            weight: he_uniform(&params.weight_shape(), fan_in, rng),
            bias: bias.then(|| Tensor::zeros(&[params.out_channels]).requires_grad()),
            params,
        })
    }

    pub fn forward(&self, x: &Tensor) -> tensor::Result<Tensor> {
        conv3d(x, &self.weight, self.bias.as_ref(), &self.params)
    }

    pub(crate) fn collect(&self, prefix: &str, out: &mut NamedParams) {
        out.push((join(prefix, "weight"), self.weight.clone()));
        if let Some(b) = &self.bias {
            out.push((join(prefix, "bias"), b.clone()));
        }
    }
}

/// Batch normalization with learnable scale/shift. Running statistics start at
/// the identity (mean 0, variance 1) so eval mode works on a fresh network.
#[derive(Debug)]
pub struct BatchNorm {
    pub scale: Tensor,
    pub shift: Tensor,
    pub stats: RefCell<RunningStats>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            scale: Tensor::ones(&[channels]).requires_grad(),
            shift: Tensor::zeros(&[channels]).requires_grad(),
            stats: RefCell::new(RunningStats::identity(channels)),
        }
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> tensor::Result<Tensor> {
        batch_norm(x, &self.scale, &self.shift, &mut self.stats.borrow_mut(), mode)
    }

    pub(crate) fn collect(&self, prefix: &str, out: &mut NamedParams) {
        out.push((join(prefix, "scale"), self.scale.clone()));
        out.push((join(prefix, "shift"), self.shift.clone()));
    }
}

/// Bias-free convolution, batch norm, ReLU.
#[derive(Debug)]
pub struct ConvBnRelu {
    pub conv: Conv,
    pub bn: BatchNorm,
}

impl ConvBnRelu {
    pub fn new(params: ConvParams, rng: &mut impl Rng) -> Result<Self> {
        Ok(ConvBnRelu { conv: Conv::new(params, false, rng)?, bn: BatchNorm::new(params.out_channels) })
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> tensor::Result<Tensor> {
        Ok(relu(&self.bn.forward(&self.conv.forward(x)?, mode)?))
    }

    pub(crate) fn collect(&self, prefix: &str, out: &mut NamedParams) {
        self.conv.collect(prefix, out);
        self.bn.collect(&join(prefix, "bn"), out);
    }

    pub(crate) fn collect_stats<'a>(&'a self, prefix: &str, out: &mut NamedStats<'a>) {
        out.push((join(prefix, "bn"), &self.bn.stats));
    }
}

/// Two 3x3x3 conv+BN+ReLU stages, the body of every encoder and decoder level.
#[derive(Debug)]
pub(crate) struct DoubleConv {
    pub first: ConvBnRelu,
    pub second: ConvBnRelu,
}

impl DoubleConv {
    pub fn new(c_in: usize, c_out: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(DoubleConv {
            first: ConvBnRelu::new(ConvParams::same(c_in, c_out, [3; 3], 1), rng)?,
            second: ConvBnRelu::new(ConvParams::same(c_out, c_out, [3; 3], 1), rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> tensor::Result<Tensor> {
        self.second.forward(&self.first.forward(x, mode)?, mode)
    }

    pub fn collect(&self, prefix: &str, out: &mut NamedParams) {
        self.first.collect(&join(prefix, "conv1"), out);
        self.second.collect(&join(prefix, "conv2"), out);
    }

    pub fn collect_stats<'a>(&'a self, prefix: &str, out: &mut NamedStats<'a>) {
        self.first.collect_stats(&join(prefix, "conv1"), out);
        self.second.collect_stats(&join(prefix, "conv2"), out);
    }
}
