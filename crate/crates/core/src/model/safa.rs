//! Scale-adaptive feature augmentation at the bottleneck.

use rand::Rng;

use super::layers::{join, Conv, ConvBnRelu, NamedParams, NamedStats};
use super::{channel_axis, ModelError, Mode, Result};
use crate::tensor::{add, concat, matmul, mul, sigmoid, softmax, split, transpose_last, ConvParams, Tensor};

/// Query, key and value projections: anisotropic 3x1x1, 1x3x1 and 1x1x3
/// convolutions, each followed by BN and ReLU.
#[derive(Debug)]
pub struct SelfAttention {
    pub query: ConvBnRelu,
    pub key: ConvBnRelu,
    pub value: ConvBnRelu,
}

#[derive(Debug)]
pub struct Safa {
    pub dilations: Vec<usize>,
    /// One dilated 3x3x3 convolution (with bias) per channel group.
    pub branches: Vec<Conv>,
    pub attention: Option<SelfAttention>,
}

/// Intermediate values of one SAFA pass.
#[derive(Debug, Clone)]
pub struct SafaTrace {
    /// Gated groups joined back to `C` channels.
    pub concatenated: Tensor,
    /// `[N, L, L]` row-stochastic attention matrix, `L = D*H*W`.
    pub attention: Option<Tensor>,
    pub output: Tensor,
}

impl Safa {
    pub fn new(channels: usize, dilations: &[usize], self_attention: bool, rng: &mut impl Rng) -> Result<Self> {
        let groups = dilations.len();
        if groups == 0 || channels % groups != 0 {
            return Err(ModelError::InvalidConfig(format!("{channels} channels do not split into {groups} groups")));
        }
        let width = channels / groups;
        let branches = dilations
            .iter()
            .map(|&d| Conv::new(ConvParams::same(width, width, [3; 3], d), true, rng))
            .collect::<Result<Vec<_>>>()?;
        let attention = if self_attention {
            let proj = |k: [usize; 3], rng: &mut _| ConvBnRelu::new(ConvParams::same(channels, channels, k, 1), rng);
            Some(SelfAttention { query: proj([3, 1, 1], rng)?, key: proj([1, 3, 1], rng)?, value: proj([1, 1, 3], rng)? })
        } else {
            None
        };
        Ok(Safa { dilations: dilations.to_vec(), branches, attention })
    }

    pub fn forward(&self, y: &Tensor, mode: Mode) -> Result<Tensor> {
        Ok(self.forward_traced(y, mode)?.output)
    }

    pub fn forward_traced(&self, y: &Tensor, mode: Mode) -> Result<SafaTrace> {
        let axis = channel_axis(y);
        let groups = split(y, axis, self.branches.len())?;
        let gated = groups
            .iter()
            .zip(&self.branches)
            .map(|(g, conv)| {
                let z = conv.forward(g)?;
                Ok(mul(&sigmoid(&z), &z)?)
            })
            .collect::<Result<Vec<_>>>()?;
        let concatenated = concat(&gated, axis)?;
        let Some(att) = &self.attention else {
            return Ok(SafaTrace { output: concatenated.clone(), concatenated, attention: None });
        };
        let shape = concatenated.shape().to_vec();
        let (n, c) = if shape.len() == 5 { (shape[0], shape[1]) } else { (1, shape[0]) };
        let l = concatenated.numel() / (n * c);
        let flat = |t: Tensor| t.reshape(&[n, c, l]);
        let q = flat(att.query.forward(&concatenated, mode)?)?;
        let k = flat(att.key.forward(&concatenated, mode)?)?;
        let v = flat(att.value.forward(&concatenated, mode)?)?;
        let attention = softmax(&matmul(&transpose_last(&q)?, &k)?, 2)?;
        let context = matmul(&v, &transpose_last(&attention)?)?.reshape(&shape)?;
        let output = add(&concatenated, &context)?;
        Ok(SafaTrace { concatenated, attention: Some(attention), output })
    }

    pub(crate) fn collect(&self, prefix: &str, out: &mut NamedParams) {
        for (i, b) in self.branches.iter().enumerate() {
            b.collect(&join(prefix, &format!("branch{i}")), out);
        }
        if let Some(a) = &self.attention {
            a.query.collect(&join(prefix, "query"), out);
            a.key.collect(&join(prefix, "key"), out);
            a.value.collect(&join(prefix, "value"), out);
        }
    }

    pub(crate) fn collect_stats<'a>(&'a self, prefix: &str, out: &mut NamedStats<'a>) {
        if let Some(a) = &self.attention {
            a.query.collect_stats(&join(prefix, "query"), out);
            a.key.collect_stats(&join(prefix, "key"), out);
            a.value.collect_stats(&join(prefix, "value"), out);
        }
    }
}

pub fn safa_forward(y: &Tensor, safa: &Safa, mode: Mode) -> Result<Tensor> {
    safa.forward(y, mode)
}
