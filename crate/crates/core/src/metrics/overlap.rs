use serde::{Deserialize, Serialize};

use super::{MetricsError, Result};
use crate::data::LabelMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        ConfusionCounts { tp: self.tp + o.tp, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_, tn: self.tn + o.tn }
    }
}

pub fn confusion(pred: &LabelMask, truth: &LabelMask) -> Result<ConfusionCounts> {
    if pred.extents() != truth.extents() {
        return Err(MetricsError::ShapeMismatch { left: pred.extents().to_vec(), right: truth.extents().to_vec() });
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.values.iter().zip(&truth.values) {
        match (p != 0, t != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    pub dice: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Dice `2TP/(2TP+FP+FN)`, recall `TP/(TP+FN)`, precision `TP/(TP+FP)`.
///
/// A zero denominator yields 1 when both masks are empty and 0 otherwise.
pub fn overlap_metrics(c: &ConfusionCounts) -> Overlap {
    let both_empty = c.tp + c.fp + c.fn_ == 0;
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            if both_empty {
                1.0
            } else {
                0.0
            }
        } else {
            num as f64 / den as f64
        }
    };
    Overlap {
        dice: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
        recall: ratio(c.tp, c.tp + c.fn_),
        precision: ratio(c.tp, c.tp + c.fp),
    }
}
