use super::{Result, Tensor, TensorError};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchNormMode {
    Train,
    Eval,
}

/// Exponential moving averages of per-channel batch statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    /// False until a train-mode pass has run or the stats were set explicitly.
    pub initialized: bool,
}

impl RunningStats {
    /// Mean 0, variance 1, not yet usable in eval mode.
    pub fn new(channels: usize) -> Self {
        RunningStats { mean: vec![0.0; channels], var: vec![1.0; channels], initialized: false }
    }

    /// Mean 0, variance 1, explicitly marked usable in eval mode.
    pub fn identity(channels: usize) -> Self {
        RunningStats { initialized: true, ..Self::new(channels) }
    }
}

fn layout(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match shape.len() {
        0 | 1 => Err(TensorError::ExpectedSpatial(shape.to_vec())),
        5 => Ok((shape[0], shape[1], shape[2..].iter().product())),
        _ => Ok((1, shape[0], shape[1..].iter().product())),
    }
}

/// Per-channel batch normalization followed by an affine `scale`/`shift`.
///
/// The channel axis is axis 1 of a rank-5 tensor and axis 0 otherwise.
pub fn batch_norm(
    input: &Tensor,
    scale: &Tensor,
    shift: &Tensor,
    running: &mut RunningStats,
    mode: BatchNormMode,
) -> Result<Tensor> {
    let (n, c, vol) = layout(input.shape())?;
    for (name, t) in [("bn scale", scale), ("bn shift", shift)] {
        if t.shape() != [c] {
            return Err(TensorError::AxisMismatch { name, axis: 0, expected: c, actual: t.shape()[0] });
        }
    }
    if running.mean.len() != c {
        return Err(TensorError::AxisMismatch { name: "bn running stats", axis: 0, expected: c, actual: running.mean.len() });
    }
    let count = (n * vol) as f64;
    let x = input.data();
    let at = move |s: usize, ch: usize| (s * c + ch) * vol;

    let (mean, var) = match mode {
        BatchNormMode::Train => {
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for ch in 0..c {
                let mut total = 0.0;
                for s in 0..n {
                    total += x[at(s, ch)..at(s, ch) + vol].iter().sum::<f64>();
                }
                let m = total / count;
                let mut sq = 0.0;
                for s in 0..n {
                    sq += x[at(s, ch)..at(s, ch) + vol].iter().map(|v| (v - m) * (v - m)).sum::<f64>();
                }
                mean[ch] = m;
                var[ch] = sq / count;
            }
            let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
            for ch in 0..c {
                running.mean[ch] = (1.0 - BN_MOMENTUM) * running.mean[ch] + BN_MOMENTUM * mean[ch];
                running.var[ch] = (1.0 - BN_MOMENTUM) * running.var[ch] + BN_MOMENTUM * var[ch] * unbias;
            }
            running.initialized = true;
            (mean, var)
        }
        BatchNormMode::Eval => {
            if !running.initialized {
                return Err(TensorError::RunningStatsUninitialized);
            }
            (running.mean.clone(), running.var.clone())
        }
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
    let sc = scale.to_vec();
    let sh = shift.to_vec();
    let mut xhat = vec![0.0; x.len()];
    let mut out = vec![0.0; x.len()];
    for s in 0..n {
        for ch in 0..c {
            let base = at(s, ch);
            for i in base..base + vol {
                let h = (x[i] - mean[ch]) * inv_std[ch];
                xhat[i] = h;
                out[i] = sc[ch] * h + sh[ch];
            }
        }
    }
    drop(x);
    let need = (input.is_requires_grad(), scale.is_requires_grad(), shift.is_requires_grad());
    let backward = Box::new(move |g: &[f64]| {
        let mut gsum = vec![0.0; c];
        let mut gxhat = vec![0.0; c];
        for s in 0..n {
            for ch in 0..c {
                let base = at(s, ch);
                for i in base..base + vol {
                    gsum[ch] += g[i];
                    gxhat[ch] += g[i] * xhat[i];
                }
            }
        }
        let gx = need.0.then(|| {
            let mut gx = vec![0.0; g.len()];
            for s in 0..n {
                for ch in 0..c {
                    let base = at(s, ch);
                    let k = sc[ch] * inv_std[ch];
                    for i in base..base + vol {
                        gx[i] = match mode {
                            BatchNormMode::Train => k * (g[i] - gsum[ch] / count - xhat[i] * gxhat[ch] / count),
                            BatchNormMode::Eval => k * g[i],
                        };
                    }
                }
            }
            gx
        });
        vec![gx, need.1.then(|| gxhat.clone()), need.2.then(|| gsum.clone())]
    });
    Ok(Tensor::from_op(
        input.shape().to_vec(),
        out,
        "batch_norm",
        vec![input.clone(), scale.clone(), shift.clone()],
        backward,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_channel_normalizes_to_zero() {
        let x = Tensor::full(&[2, 2, 2, 2], 4.0);
        let mut rs = RunningStats::new(2);
        let y = batch_norm(&x, &Tensor::ones(&[2]), &Tensor::zeros(&[2]), &mut rs, BatchNormMode::Train).unwrap();
        assert!(y.to_vec().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_scale_collapses_to_shift() {
        let x = Tensor::from_vec(&[1, 2, 2, 2], (0..8).map(|i| i as f64 * 1.3).collect()).unwrap();
        let mut rs = RunningStats::new(1);
        let y = batch_norm(&x, &Tensor::zeros(&[1]), &Tensor::full(&[1], 0.75), &mut rs, BatchNormMode::Train).unwrap();
        assert!(y.to_vec().iter().all(|&v| v == 0.75));
    }

    #[test]
    fn eval_before_train_is_error() {
        let x = Tensor::zeros(&[1, 2, 2, 2]);
        let mut rs = RunningStats::new(1);
        let r = batch_norm(&x, &Tensor::ones(&[1]), &Tensor::zeros(&[1]), &mut rs, BatchNormMode::Eval);
        assert_eq!(r.unwrap_err(), TensorError::RunningStatsUninitialized);
        let mut rs = RunningStats::identity(1);
        assert!(batch_norm(&x, &Tensor::ones(&[1]), &Tensor::zeros(&[1]), &mut rs, BatchNormMode::Eval).is_ok());
    }

    #[test]
    fn running_stats_follow_momentum() {
        let x = Tensor::from_vec(&[1, 1, 1, 2], vec![1.0, 3.0]).unwrap();
        let mut rs = RunningStats::new(1);
        batch_norm(&x, &Tensor::ones(&[1]), &Tensor::zeros(&[1]), &mut rs, BatchNormMode::Train).unwrap();
        assert!((rs.mean[0] - 0.2).abs() < 1e-15);
        // unbiased variance of {1,3} is 2
        assert!((rs.var[0] - (0.9 + 0.2)).abs() < 1e-15);
        assert!(rs.initialized);
    }

    #[test]
    fn channel_mismatch_rejected() {
        let x = Tensor::zeros(&[3, 2, 2, 2]);
        let mut rs = RunningStats::new(2);
        assert!(batch_norm(&x, &Tensor::ones(&[2]), &Tensor::zeros(&[2]), &mut rs, BatchNormMode::Train).is_err());
    }
}
