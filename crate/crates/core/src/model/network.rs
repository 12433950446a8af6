//! The U-shaped encoder-decoder assembled from a [`ModelConfig`].

use std::cell::RefCell;

use super::layers::{Conv, DoubleConv, NamedStats};
use super::{channel_axis, hfim_fuse_level, Frm, Hfim, ModelConfig, ModelError, Mode, Result, Safa};
use crate::tensor::{concat, pool3d, seeded_rng, upsample_trilinear2x, ConvParams, PoolKind, RunningStats, Tensor};

/// All learnable state of one network.
///
/// Level `l` (0-based) has `base_channels << l` channels. The encoder has
/// `depth` levels; the decoder produces one output per level above the
/// bottleneck.
#[derive(Debug)]
pub struct NetworkState {
    pub config: ModelConfig,
    encoders: Vec<DoubleConv>,
    safa: Option<Safa>,
    decoders: Vec<DoubleConv>,
    skip_frm: Vec<Frm>,
    decoder_frm: Vec<Frm>,
    /// `hfim[l]` fuses decoder output `l` with the (fused) output `l + 1`.
    hfim: Vec<Hfim>,
    head: Conv,
}

/// Deterministic given `(config, seed)`: parameters are drawn from a single
/// seeded stream in construction order.
pub fn build_network(config: &ModelConfig, seed: u64) -> Result<NetworkState> {
    config.validate()?;
    let rng = &mut seeded_rng(seed);
    let depth = config.depth;
    let ch = |l: usize| config.channels(l);

    let mut encoders = Vec::with_capacity(depth);
    for l in 0..depth {
        let c_in = if l == 0 { config.in_channels } else { ch(l - 1) };
        encoders.push(DoubleConv::new(c_in, ch(l), rng)?);
    }
    let safa = if config.use_safa {
        Some(Safa::new(ch(depth - 1), &config.safa_dilations, config.use_safa_self_attention, rng)?)
    } else {
        None
    };
    let mut decoders = Vec::with_capacity(depth - 1);
    for l in 0..depth - 1 {
        decoders.push(DoubleConv::new(ch(l) + ch(l + 1), ch(l), rng)?);
    }
    let (mut skip_frm, mut decoder_frm) = (Vec::new(), Vec::new());
    if config.use_frm {
        for l in 0..depth - 1 {
            skip_frm.push(Frm::new(ch(l), config.frm_reduction, rng)?);
        }
        for l in 0..depth - 1 {
            decoder_frm.push(Frm::new(ch(l), config.frm_reduction, rng)?);
        }
    }
    let mut hfim = Vec::new();
    if config.use_hfim {
        for l in 0..depth - 2 {
            hfim.push(Hfim::new(ch(l), ch(l + 1), rng)?);
        }
    }
    let head = Conv::new(ConvParams::same(ch(0), config.out_channels, [1; 3], 1), true, rng)?;
    Ok(NetworkState { config: config.clone(), encoders, safa, decoders, skip_frm, decoder_frm, hfim, head })
}

impl NetworkState {
    /// Every learnable tensor with its hierarchical name, in a fixed order.
    pub fn named_parameters(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (l, e) in self.encoders.iter().enumerate() {
            e.collect(&format!("enc{}", l + 1), &mut out);
        }
        if let Some(s) = &self.safa {
            s.collect("safa", &mut out);
        }
        for (l, f) in self.skip_frm.iter().enumerate() {
            f.collect(&format!("skip{}.frm", l + 1), &mut out);
        }
        for (l, d) in self.decoders.iter().enumerate() {
            d.collect(&format!("dec{}", l + 1), &mut out);
        }
        for (l, f) in self.decoder_frm.iter().enumerate() {
            f.collect(&format!("dec{}.frm", l + 1), &mut out);
        }
        for (l, h) in self.hfim.iter().enumerate() {
            h.collect(&format!("hfim{}", l + 1), &mut out);
        }
        self.head.collect("head", &mut out);
        out
    }

    /// Batch-norm running statistics keyed like their layers.
    pub fn named_running_stats(&self) -> Vec<(String, &RefCell<RunningStats>)> {
        let mut out: NamedStats<'_> = Vec::new();
        for (l, e) in self.encoders.iter().enumerate() {
            e.collect_stats(&format!("enc{}", l + 1), &mut out);
        }
        if let Some(s) = &self.safa {
            s.collect_stats("safa", &mut out);
        }
        for (l, d) in self.decoders.iter().enumerate() {
            d.collect_stats(&format!("dec{}", l + 1), &mut out);
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.named_parameters().iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn zero_grad(&self) {
        for (_, p) in self.named_parameters() {
            p.zero_grad();
        }
    }

    pub fn safa(&self) -> Option<&Safa> {
        self.safa.as_ref()
    }

    pub fn skip_frm(&self) -> &[Frm] {
        &self.skip_frm
    }

    pub fn decoder_frm(&self) -> &[Frm] {
        &self.decoder_frm
    }

    pub fn hfim(&self) -> &[Hfim] {
        &self.hfim
    }

    /// Logits with the input's shape: `[1, D, H, W]` or `[N, 1, D, H, W]`.
    pub fn forward(&self, input: &Tensor, mode: Mode) -> Result<Tensor> {
        let cfg = &self.config;
        let shape = input.shape();
        let c_axis = channel_axis(input);
        if !(shape.len() == 4 || shape.len() == 5) || shape[c_axis] != cfg.in_channels {
            return Err(ModelError::InputShape { expected: cfg.in_channels, shape: shape.to_vec() });
        }
        let sp = [shape[c_axis + 1], shape[c_axis + 2], shape[c_axis + 3]];
        let multiple = cfg.extent_multiple();
        if sp.iter().any(|&e| e % multiple != 0) {
            return Err(ModelError::ExtentsNotDivisible { extents: sp, multiple });
        }

        let mut skips = Vec::with_capacity(cfg.depth);
        let mut x = input.clone();
        for (l, enc) in self.encoders.iter().enumerate() {
            if l > 0 {
                x = pool3d(&x, PoolKind::Max, [2; 3], [2; 3])?;
            }
            x = enc.forward(&x, mode)?;
            skips.push(x.clone());
        }
        skips.pop();
        if let Some(s) = &self.safa {
            x = s.forward(&x, mode)?;
        }

        let mut outputs = vec![None; cfg.depth - 1];
        for l in (0..cfg.depth - 1).rev() {
            let up = upsample_trilinear2x(&x)?;
            let skip = match self.skip_frm.get(l) {
                Some(frm) => frm.forward(&skips[l])?,
                None => skips[l].clone(),
            };
            let mut y = self.decoders[l].forward(&concat(&[skip, up], c_axis)?, mode)?;
            if let Some(frm) = self.decoder_frm.get(l) {
                y = frm.forward(&y)?;
            }
            outputs[l] = Some(y.clone());
            x = y;
        }
        let outputs: Vec<Tensor> = outputs.into_iter().map(|o| o.expect("every decoder level ran")).collect();

        let top = if self.hfim.is_empty() {
            outputs[0].clone()
        } else {
            let mut high = outputs[cfg.depth - 2].clone();
            for l in (0..cfg.depth - 2).rev() {
                high = hfim_fuse_level(&outputs[l], &high, &self.hfim[l])?;
            }
            high
        };
        Ok(self.head.forward(&top)?)
    }
}

pub fn forward_full(net: &NetworkState, input: &Tensor, mode: Mode) -> Result<Tensor> {
    net.forward(input, mode)
}
