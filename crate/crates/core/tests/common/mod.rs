//! Shared test oracles. Included by path from several test crates, so not
//! every helper is used by every includer.
#![allow(dead_code)]

pub mod grad_suite;
pub mod masks;
pub mod oracles;

use agfa_core::tensor::{mul, seeded_rng, sum, Tensor};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    seeded_rng(seed)
}

pub fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Uniform in [-2, 2] but at least `gap` away from zero.
pub fn away_from_zero(shape: &[usize], gap: f64, rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(-2.0..2.0);
            if v.abs() < gap {
                v.signum() * gap + v
            } else {
                v
            }
        })
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Distinct values in [-2, 2) spaced `4 / n` apart, in random order, so max
/// reductions never tie.
pub fn distinct(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let mut data: Vec<f64> = (0..n).map(|i| -2.0 + 4.0 * i as f64 / n as f64).collect();
    data.shuffle(rng);
    Tensor::from_vec(shape, data).unwrap()
}

/// `sum(y * r)` for fixed pseudo-random weights `r`, so every output element
/// contributes a distinct amount to the gradient.
pub fn project(y: &Tensor, seed: u64) -> Tensor {
    let mut r = rng(seed ^ 0x9e37);
    let w = uniform(y.shape(), -1.0, 1.0, &mut r);
    sum(&mul(y, &w).unwrap())
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
