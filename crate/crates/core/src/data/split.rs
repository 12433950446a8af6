use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DataError, Result};
use crate::tensor::seeded_rng;

/// Share of the non-test ids held out for validation in every fold.
pub const VALIDATION_FRACTION: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// `k`-fold cross-validation partitions.
///
/// The ids are shuffled once; fold `i` tests on the `i`-th contiguous chunk
/// (chunk sizes differ by at most one), and from the remaining ids a
/// rounded 15% is drawn for validation with a fold-specific shuffle.
pub fn kfold_split(ids: &[String], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k == 0 || ids.len() < k {
        return Err(DataError::TooFewIds { ids: ids.len(), k });
    }
    let mut order = ids.to_vec();
    order.shuffle(&mut seeded_rng(seed));
    let n = order.len();
    let bounds: Vec<usize> = (0..=k).map(|i| i * n / k).collect();
    Ok((0..k)
        .map(|i| {
            let test = order[bounds[i]..bounds[i + 1]].to_vec();
            let mut rest: Vec<String> = order[..bounds[i]].iter().chain(&order[bounds[i + 1]..]).cloned().collect();
            rest.shuffle(&mut seeded_rng(seed.wrapping_add(1 + i as u64)));
            let n_val = (VALIDATION_FRACTION * rest.len() as f64).round() as usize;
            let train = rest.split_off(n_val);
            Fold { train, val: rest, test }
        })
        .collect())
}
