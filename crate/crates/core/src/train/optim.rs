use serde::{Deserialize, Serialize};

use super::{Result, TrainError};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Shrink weights directly (`p -= lr * wd * p`) instead of adding
    /// `wd * p` to the gradient.
    pub decoupled_weight_decay: bool,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-6, decoupled_weight_decay: true }
    }
}

/// First and second moment estimates of one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub name: String,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    /// The learning rate of the latest step.
    pub lr: f64,
    pub moments: Vec<Moments>,
}

impl OptimizerState {
    pub fn new(params: &[(String, Tensor)], config: AdamConfig) -> Self {
        let moments = params
            .iter()
            .map(|(name, p)| Moments { name: name.clone(), m: vec![0.0; p.numel()], v: vec![0.0; p.numel()] })
            .collect();
        OptimizerState { config, step: 0, lr: 0.0, moments }
    }
}

/// One bias-corrected Adam update of every parameter in `params`, which
/// must be listed in the order the state was created with.
pub fn adam_step(params: &[(String, Tensor)], state: &mut OptimizerState, lr: f64) -> Result<()> {
    if params.len() != state.moments.len() {
        return Err(TrainError::StateMismatch(format!(
            "{} parameters but {} moment slots",
            params.len(),
            state.moments.len()
        )));
    }
    let grads: Vec<Vec<f64>> = params
        .iter()
        .zip(&state.moments)
        .map(|((name, p), mo)| {
            if *name != mo.name || p.numel() != mo.m.len() {
                return Err(TrainError::StateMismatch(format!("parameter {name} does not match slot {}", mo.name)));
            }
            p.grad().ok_or_else(|| TrainError::MissingGradient(name.clone()))
        })
        .collect::<Result<_>>()?;

    state.step += 1;
    state.lr = lr;
    let c = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);
    for (((_, p), mo), g) in params.iter().zip(&mut state.moments).zip(grads) {
        let mut w = p.data_mut();
        for i in 0..g.len() {
            let mut gi = g[i];
            if !c.decoupled_weight_decay {
                gi += c.weight_decay * w[i];
            }
            mo.m[i] = c.beta1 * mo.m[i] + (1.0 - c.beta1) * gi;
            mo.v[i] = c.beta2 * mo.v[i] + (1.0 - c.beta2) * gi * gi;
            let mhat = mo.m[i] / bc1;
            let vhat = mo.v[i] / bc2;
            if c.decoupled_weight_decay && c.weight_decay != 0.0 {
                w[i] -= lr * c.weight_decay * w[i];
            }
            w[i] -= lr * mhat / (vhat.sqrt() + c.eps);
        }
    }
    Ok(())
}
