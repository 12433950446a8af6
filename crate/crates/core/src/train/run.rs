use std::cell::RefCell;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{adam_step, splitmix64, AdamConfig, OptimizerState, Result, ScheduleState, TrainError};
use crate::data::{augment, normalize, AugmentConfig, LabelMask, Sample, Volume, Window};
use crate::metrics::{combined_loss, postprocess, MetricsReport};
use crate::model::{build_network, Mode, ModelConfig, NetworkState};
use crate::tensor::{no_grad, seeded_rng, sigmoid, RunningStats, Tensor};

/// Sigmoid outputs strictly above this are foreground.
pub const THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub augment: AugmentConfig,
    pub window: Window,
    pub adam: AdamConfig,
    pub schedule: ScheduleState,
    /// Validate after every `validate_every` epochs (0 disables).
    pub validate_every: usize,
    pub postprocess_radius: usize,
}

impl Default for TrainConfig {
    /// Full-scale protocol: 500 epochs, batches of 16 crops of 128 x 160 x 160.
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            batch_size: 16,
            seed: 0,
            augment: AugmentConfig { crop: [128, 160, 160], ..AugmentConfig::default() },
            window: Window::Auto,
            adam: AdamConfig::default(),
            schedule: ScheduleState::default(),
            validate_every: 1,
            postprocess_radius: 1,
        }
    }
}

impl TrainConfig {
    /// Laptop scale: batches of two 32^3 crops.
    pub fn desk() -> Self {
        TrainConfig { epochs: 50, batch_size: 2, augment: AugmentConfig::default(), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch_size must be positive".into()));
        }
        if !(self.schedule.base_lr > 0.0 && self.schedule.eta_min >= 0.0 && self.schedule.eta_min <= self.schedule.base_lr)
        {
            return Err(TrainError::InvalidConfig("need 0 <= eta_min <= base_lr and base_lr > 0".into()));
        }
        self.augment.validate()?;
        Ok(())
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig { window: self.window, postprocess_radius: self.postprocess_radius }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub dice: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Means over the batches of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub lr: f64,
    pub l_wce: f64,
    pub l_dice: f64,
    pub total: f64,
    pub omega: f64,
    pub val: Option<ValidationRecord>,
}

impl EpochRecord {
    pub fn log_line(&self) -> String {
        let val = self.val.map_or_else(|| "none".to_string(), |v| format!("{:.6}", v.dice));
        format!(
            "epoch={} lr={:.6e} l_wce={:.6} l_dice={:.6} total={:.6} omega={:.4} val_dice={val}",
            self.epoch, self.lr, self.l_wce, self.l_dice, self.total, self.omega
        )
    }
}

/// Parameter values and running statistics by name.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub params: Vec<(String, Vec<f64>)>,
    pub stats: Vec<(String, RunningStats)>,
}

impl Snapshot {
    pub fn of(net: &NetworkState) -> Self {
        Snapshot {
            params: net.named_parameters().into_iter().map(|(n, p)| (n, p.to_vec())).collect(),
            stats: net.named_running_stats().into_iter().map(|(n, s)| (n, s.borrow().clone())).collect(),
        }
    }

    /// Writes the values into `net`; names and sizes must match exactly.
    pub fn restore(&self, net: &NetworkState) -> Result<()> {
        let params = net.named_parameters();
        let stats = net.named_running_stats();
        if params.len() != self.params.len() || stats.len() != self.stats.len() {
            return Err(TrainError::StateMismatch("snapshot and network differ in layout".into()));
        }
        for ((name, p), (sname, values)) in params.iter().zip(&self.params) {
            if name != sname || p.numel() != values.len() {
                return Err(TrainError::StateMismatch(format!("parameter {name} vs snapshot {sname}")));
            }
            p.data_mut().copy_from_slice(values);
        }
        for ((name, s), (sname, values)) in stats.iter().zip(&self.stats) {
            if name != sname || s.borrow().mean.len() != values.mean.len() {
                return Err(TrainError::StateMismatch(format!("running stats {name} vs snapshot {sname}")));
            }
            *RefCell::borrow_mut(s) = values.clone();
        }
        Ok(())
    }
}

/// The best validation result so far with the weights that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct BestState {
    pub epoch: usize,
    pub dice: f64,
    pub snapshot: Snapshot,
}

/// Network, optimizer, schedule and history of one training run.
#[derive(Debug)]
pub struct Trainer {
    pub net: NetworkState,
    pub optimizer: OptimizerState,
    pub schedule: ScheduleState,
    pub config: TrainConfig,
    pub history: Vec<EpochRecord>,
    pub best: Option<BestState>,
}

fn stack(samples: &[Sample]) -> Result<(Tensor, Tensor)> {
    let ext = samples[0].geometry().extents;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for s in samples {
        if s.geometry().extents != ext {
            return Err(TrainError::InvalidConfig(format!(
                "batch mixes extents {ext:?} and {:?}",
                s.geometry().extents
            )));
        }
        x.extend_from_slice(&s.volume.intensities);
        y.extend(s.mask.values.iter().map(|&v| f64::from(v)));
    }
    let shape = [samples.len(), 1, ext[0], ext[1], ext[2]];
    Ok((Tensor::from_vec(&shape, x)?, Tensor::from_vec(&shape, y)?))
}

fn normalized(samples: &[Sample], window: Window) -> Vec<Sample> {
    samples.iter().map(|s| Sample { volume: normalize(&s.volume, window), ..s.clone() }).collect()
}

impl Trainer {
    pub fn new(model: &ModelConfig, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let net = build_network(model, config.seed)?;
        let optimizer = OptimizerState::new(&net.named_parameters(), config.adam);
        let schedule = ScheduleState { iteration: 0, ..config.schedule };
        Ok(Trainer { net, optimizer, schedule, config, history: Vec::new(), best: None })
    }

    pub fn epochs_done(&self) -> usize {
        self.history.len()
    }

    /// Trains until `config.epochs` epochs are done, calling `on_epoch` after
    /// each one. Resumes from `epochs_done()`.
    pub fn run(&mut self, train: &[Sample], val: &[Sample], on_epoch: &mut dyn FnMut(&Trainer)) -> Result<()> {
        self.run_until(self.config.epochs, train, val, on_epoch)
    }

    pub fn run_until(
        &mut self,
        epochs: usize,
        train: &[Sample],
        val: &[Sample],
        on_epoch: &mut dyn FnMut(&Trainer),
    ) -> Result<()> {
        if train.is_empty() {
            return Err(TrainError::EmptyDataset("train on"));
        }
        let train = normalized(train, self.config.window);
        let val = normalized(val, self.config.window);
        while self.epochs_done() < epochs {
            self.epoch(&train, &val)?;
            on_epoch(self);
        }
        Ok(())
    }

    /// One pass over already normalized samples.
    fn epoch(&mut self, train: &[Sample], val: &[Sample]) -> Result<()> {
        let epoch = self.epochs_done() + 1;
        let mut rng = seeded_rng(splitmix64(self.config.seed ^ splitmix64(epoch as u64)));
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let lr = self.schedule.lr();
        let params = self.net.named_parameters();
        let cfg = self.net.config.clone();
        let (mut sums, mut batches) = ([0.0; 4], 0usize);
        for (b, chunk) in order.chunks(self.config.batch_size).enumerate() {
            let crops = chunk
                .iter()
                .map(|&i| augment(&train[i], &self.config.augment, &mut rng).map(|(s, _)| s))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let (x, y) = stack(&crops)?;
            let logits = self.net.forward(&x, Mode::Train)?;
            let (loss, terms) = combined_loss(&logits, &y, cfg.loss_lambda, cfg.loss_epsilon)?;
            if !terms.total.is_finite() {
                return Err(TrainError::NonFinite { epoch, batch: b + 1, value: terms.total });
            }
            self.net.zero_grad();
            loss.backward()?;
            adam_step(&params, &mut self.optimizer, lr)?;
            self.net.zero_grad();
            for (s, v) in sums.iter_mut().zip([terms.l_wce, terms.l_dice, terms.total, terms.omega]) {
                *s += v;
            }
            batches += 1;
        }
        self.schedule.advance();
        let k = batches as f64;
        let every = self.config.validate_every;
        let val_record = if !val.is_empty() && every > 0 && epoch % every == 0 {
            let ev = evaluate_prepared(&self.net, val, self.config.postprocess_radius)?;
            let r = &ev.raw;
            if self.best.as_ref().is_none_or(|b| r.dice > b.dice) {
                self.best = Some(BestState { epoch, dice: r.dice, snapshot: Snapshot::of(&self.net) });
            }
            Some(ValidationRecord { dice: r.dice, recall: r.recall, precision: r.precision })
        } else {
            None
        };
        self.history.push(EpochRecord {
            epoch,
            lr,
            l_wce: sums[0] / k,
            l_dice: sums[1] / k,
            total: sums[2] / k,
            omega: sums[3] / k,
            val: val_record,
        });
        Ok(())
    }
}

/// Builds a network from `(model, run.seed)` and trains it for `run.epochs`.
pub fn train(model: &ModelConfig, run: TrainConfig, train: &[Sample], val: &[Sample]) -> Result<Trainer> {
    let mut t = Trainer::new(model, run)?;
    t.run(train, val, &mut |_| {})?;
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub window: Window,
    pub postprocess_radius: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { window: Window::Auto, postprocess_radius: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleEvaluation {
    pub id: String,
    pub raw: MetricsReport,
    pub post: MetricsReport,
}

/// Mean metrics with and without post-processing.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub raw: MetricsReport,
    pub post: MetricsReport,
    pub per_sample: Vec<SampleEvaluation>,
}

/// Foreground probabilities for a whole volume in eval mode. The normalized
/// volume is zero-padded up to the network's extent multiple and the
/// padding is cut off again.
pub fn predict_probabilities(net: &NetworkState, volume: &Volume, window: Window) -> Result<Vec<f64>> {
    predict_normalized(net, &normalize(volume, window))
}

fn predict_normalized(net: &NetworkState, volume: &Volume) -> Result<Vec<f64>> {
    let ext = volume.geometry.extents;
    let m = net.config.extent_multiple();
    let padded: [usize; 3] = std::array::from_fn(|a| ext[a].div_ceil(m) * m);
    let mut x = vec![0.0; padded.iter().product()];
    for z in 0..ext[0] {
        for y in 0..ext[1] {
            let src = volume.geometry.index(z, y, 0);
            let dst = (z * padded[1] + y) * padded[2];
            x[dst..dst + ext[2]].copy_from_slice(&volume.intensities[src..src + ext[2]]);
        }
    }
    let input = Tensor::from_vec(&[1, 1, padded[0], padded[1], padded[2]], x)?;
    let p = no_grad(|| net.forward(&input, Mode::Eval).map(|l| sigmoid(&l)))?;
    let p = p.data();
    let mut out = Vec::with_capacity(volume.intensities.len());
    for z in 0..ext[0] {
        for y in 0..ext[1] {
            let src = (z * padded[1] + y) * padded[2];
            out.extend_from_slice(&p[src..src + ext[2]]);
        }
    }
    Ok(out)
}

/// Thresholded prediction, optionally post-processed, on the volume's grid.
pub fn predict_mask(net: &NetworkState, volume: &Volume, cfg: &EvalConfig, postprocessed: bool) -> Result<LabelMask> {
    let p = predict_probabilities(net, volume, cfg.window)?;
    let mask = LabelMask::from_probabilities(volume.geometry, &p, THRESHOLD);
    Ok(if postprocessed { postprocess(&mask, cfg.postprocess_radius) } else { mask })
}

fn evaluate_prepared(net: &NetworkState, samples: &[Sample], radius: usize) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset("evaluate"));
    }
    let mut per_sample = Vec::with_capacity(samples.len());
    for s in samples {
        let p = predict_normalized(net, &s.volume)?;
        let raw_mask = LabelMask::from_probabilities(s.volume.geometry, &p, THRESHOLD);
        let post_mask = postprocess(&raw_mask, radius);
        let spacing = s.volume.geometry.spacing;
        per_sample.push(SampleEvaluation {
            id: s.id.clone(),
            raw: MetricsReport::from_masks(&raw_mask, &s.mask, spacing)?,
            post: MetricsReport::from_masks(&post_mask, &s.mask, spacing)?,
        });
    }
    let raw: Vec<_> = per_sample.iter().map(|e| e.raw.clone()).collect();
    let post: Vec<_> = per_sample.iter().map(|e| e.post.clone()).collect();
    Ok(Evaluation {
        raw: MetricsReport::mean(&raw).expect("non-empty"),
        post: MetricsReport::mean(&post).expect("non-empty"),
        per_sample,
    })
}

/// Per-sample sigmoid, 0.5 threshold, optional post-processing and metrics;
/// the aggregate is the mean over samples.
pub fn evaluate(net: &NetworkState, samples: &[Sample], cfg: &EvalConfig) -> Result<Evaluation> {
    evaluate_prepared(net, &normalized(samples, cfg.window), cfg.postprocess_radius)
}
