//! Central-difference verification of analytic gradients.
//!
//! The relative error of one element is `|a - n| / max(|a|, |n|, floor)` with
//! `floor = 1e-6`, so gradients that are numerically zero are compared on an
//! absolute scale. `f` must be deterministic; results for non-deterministic
//! functions are meaningless. Points where `f` is not differentiable (a ReLU
//! input at exactly 0, a max-pool tie) have no well-defined reference and must
//! be excluded by the caller through the `include` predicate.

use super::{no_grad, Result, Tensor};

pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_relative_error: f64,
    pub max_abs_error: f64,
    /// Element index with the largest relative error.
    pub worst_index: Option<usize>,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Checks the gradient of scalar `f` with respect to every element of `input`.
pub fn grad_check<F>(f: F, input: &Tensor, step: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    grad_check_masked(f, input, step, tolerance, |_| true)
}

/// As [`grad_check`], probing only the elements for which `include` holds.
pub fn grad_check_masked<F, I>(f: F, input: &Tensor, step: f64, tolerance: f64, include: I) -> Result<GradCheckReport>
where
    F: Fn(&Tensor) -> Result<Tensor>,
    I: Fn(usize) -> bool,
{
    let x = input.detach().requires_grad();
    let indices: Vec<usize> = (0..x.numel()).filter(|&i| include(i)).collect();
    check_leaf(|| f(&x), &x, &indices, step, tolerance)
}

/// Checks the gradient of the scalar produced by `loss` with respect to the
/// listed elements of an existing trainable leaf (a model parameter, say).
/// The leaf's accumulated gradient is reset before and after the check.
pub fn check_leaf<L>(loss: L, leaf: &Tensor, indices: &[usize], step: f64, tolerance: f64) -> Result<GradCheckReport>
where
    L: Fn() -> Result<Tensor>,
{
    leaf.zero_grad();
    loss()?.backward()?;
    let analytic = leaf.grad().unwrap_or_else(|| vec![0.0; leaf.numel()]);
    leaf.zero_grad();

    let mut report =
        GradCheckReport { checked: 0, max_relative_error: 0.0, max_abs_error: 0.0, worst_index: None, passed: true };
    for &i in indices {
        let original = leaf.data()[i];
        leaf.data_mut()[i] = original + step;
        let plus = no_grad(&loss)?.item();
        leaf.data_mut()[i] = original - step;
        let minus = no_grad(&loss)?.item();
        leaf.data_mut()[i] = original;
        let numeric = (plus - minus) / (2.0 * step);
        let rel = relative_error(analytic[i], numeric);
        report.checked += 1;
        report.max_abs_error = report.max_abs_error.max((analytic[i] - numeric).abs());
        if rel > report.max_relative_error || report.worst_index.is_none() {
            report.max_relative_error = report.max_relative_error.max(rel);
            report.worst_index = Some(i);
        }
    }
    report.passed = report.max_relative_error <= tolerance;
    Ok(report)
}
