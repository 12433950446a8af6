use serde::{Deserialize, Serialize};

use super::{MetricsError, Result};
use crate::tensor::{add, scale, sigmoid, Tensor};

pub const DEFAULT_LAMBDA: f64 = 0.6;
pub const DEFAULT_EPSILON: f64 = 1.0;
/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// Values of one loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub l_wce: f64,
    pub l_dice: f64,
    pub omega: f64,
    pub lambda: f64,
    pub epsilon: f64,
    /// `lambda * l_wce + (1 - lambda) * l_dice`
    pub total: f64,
}

fn check_pair(p: &Tensor, g: &Tensor) -> Result<()> {
    if p.numel() != g.numel() {
        return Err(MetricsError::ShapeMismatch { left: p.shape().to_vec(), right: g.shape().to_vec() });
    }
    Ok(())
}

/// `1 - (2 sum(g p) + eps) / (sum(g) + sum(p) + eps)`; gradient flows to `p`.
pub fn dice_loss(p: &Tensor, g: &Tensor, epsilon: f64) -> Result<Tensor> {
    check_pair(p, g)?;
    let gv = g.to_vec();
    let (inter, sum_p, sum_g) = {
        let pv = p.data();
        let inter: f64 = pv.iter().zip(&gv).map(|(p, g)| p * g).sum();
        (inter, pv.iter().sum::<f64>(), gv.iter().sum::<f64>())
    };
    let num = 2.0 * inter + epsilon;
    let den = sum_g + sum_p + epsilon;
    let loss = 1.0 - num / den;
    Ok(Tensor::from_op(
        vec![1],
        vec![loss],
        "dice_loss",
        vec![p.clone(), g.clone()],
        Box::new(move |up| {
            let k = up[0] / (den * den);
            vec![Some(gv.iter().map(|g| -k * (2.0 * g * den - num)).collect()), None]
        }),
    ))
}

/// Foreground weight `(N - sum p) / sum p` of the clamped probabilities.
fn omega_of(p: &[f64]) -> f64 {
    let n = p.len() as f64;
    let s: f64 = p.iter().map(|v| v.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)).sum();
    (n - s) / s
}

/// Weighted binary cross-entropy with the foreground weight computed from the
/// current predictions. The weight is returned alongside and is treated as a
/// constant by the backward pass.
pub fn weighted_ce_loss(p: &Tensor, g: &Tensor) -> Result<(Tensor, f64)> {
    check_pair(p, g)?;
    let omega = omega_of(&p.data());
    Ok((weighted_ce_loss_with_omega(p, g, omega)?, omega))
}

/// `-(1/N) sum(omega g log p + (1 - g) log(1 - p))` for a fixed `omega`.
pub fn weighted_ce_loss_with_omega(p: &Tensor, g: &Tensor, omega: f64) -> Result<Tensor> {
    check_pair(p, g)?;
    let gv = g.to_vec();
    let pv = p.to_vec();
    let n = pv.len() as f64;
    let clamped: Vec<f64> = pv.iter().map(|v| v.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)).collect();
    let total: f64 = clamped.iter().zip(&gv).map(|(&q, &g)| omega * g * q.ln() + (1.0 - g) * (1.0 - q).ln()).sum();
    Ok(Tensor::from_op(
        vec![1],
        vec![-total / n],
        "weighted_ce_loss",
        vec![p.clone(), g.clone()],
        Box::new(move |up| {
            let k = -up[0] / n;
            let gp = pv
                .iter()
                .zip(&clamped)
                .zip(&gv)
                .map(|((&raw, &q), &g)| {
                    if raw != q {
                        0.0
                    } else {
                        k * (omega * g / q - (1.0 - g) / (1.0 - q))
                    }
                })
                .collect();
            vec![Some(gp), None]
        }),
    ))
}

/// Sigmoid of `logits`, then `lambda * L_wce + (1 - lambda) * L_dice`.
pub fn combined_loss(logits: &Tensor, g: &Tensor, lambda: f64, epsilon: f64) -> Result<(Tensor, LossTerms)> {
    combined_loss_with_omega(logits, g, lambda, epsilon, None)
}

/// As [`combined_loss`]; `omega = Some(w)` pins the foreground weight.
pub fn combined_loss_with_omega(
    logits: &Tensor,
    g: &Tensor,
    lambda: f64,
    epsilon: f64,
    omega: Option<f64>,
) -> Result<(Tensor, LossTerms)> {
    let p = sigmoid(logits);
    let omega = omega.unwrap_or_else(|| omega_of(&p.data()));
    let wce = weighted_ce_loss_with_omega(&p, g, omega)?;
    let dice = dice_loss(&p, g, epsilon)?;
    let total = add(&scale(&wce, lambda), &scale(&dice, 1.0 - lambda))?;
    let (l_wce, l_dice) = (wce.item(), dice.item());
    let terms = LossTerms { l_wce, l_dice, omega, lambda, epsilon, total: total.item() };
    Ok((total, terms))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor {
        Tensor::from_vec(&[v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn perfect_and_empty_dice() {
        let g = t(&[1.0, 0.0, 1.0, 1.0]);
        assert_eq!(dice_loss(&g, &g, 1.0).unwrap().item(), 0.0);
        let z = t(&[0.0; 4]);
        assert_eq!(dice_loss(&z, &z, 1.0).unwrap().item(), 0.0);
        assert!(dice_loss(&z, &t(&[0.0; 3]), 1.0).is_err());
    }

    #[test]
    fn confident_background_has_small_ce() {
        let (l, _) = weighted_ce_loss(&t(&[1e-9; 6]), &t(&[0.0; 6])).unwrap();
        assert!(l.item() < 1e-6);
    }

    #[test]
    fn clamped_entries_get_no_gradient() {
        let p = t(&[0.0, 0.5]).requires_grad();
        let l = weighted_ce_loss_with_omega(&p, &t(&[1.0, 1.0]), 1.0).unwrap();
        l.backward().unwrap();
        let g = p.grad().unwrap();
        assert_eq!(g[0], 0.0);
        assert!((g[1] + 1.0).abs() < 1e-12);
    }
}
