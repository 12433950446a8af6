use serde::{Deserialize, Serialize};

use super::hausdorff::{hausdorff_distance, HausdorffVariant};
use super::overlap::{confusion, overlap_metrics, ConfusionCounts};
use super::Result;
use crate::data::LabelMask;

/// Metrics for one prediction/truth pair, or the mean over several pairs.
///
/// Distances are `None` when either mask is empty. `hausdorff_mm` repeats
/// the distance of `hausdorff_variant` (HD95 unless chosen otherwise).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dice: f64,
    pub recall: f64,
    pub precision: f64,
    pub hausdorff_variant: HausdorffVariant,
    pub hausdorff_mm: Option<f64>,
    pub hd100_mm: Option<f64>,
    pub hd95_mm: Option<f64>,
    /// Summed over all aggregated pairs.
    pub counts: ConfusionCounts,
    pub samples: usize,
}

impl MetricsReport {
    pub fn from_masks(pred: &LabelMask, truth: &LabelMask, spacing: [f64; 3]) -> Result<Self> {
        Self::from_masks_with(pred, truth, spacing, HausdorffVariant::Hd95)
    }

    pub fn from_masks_with(
        pred: &LabelMask,
        truth: &LabelMask,
        spacing: [f64; 3],
        variant: HausdorffVariant,
    ) -> Result<Self> {
        let counts = confusion(pred, truth)?;
        let o = overlap_metrics(&counts);
        let hd = |p: f64| -> Result<Option<f64>> {
            if pred.is_empty() || truth.is_empty() {
                Ok(None)
            } else {
                hausdorff_distance(pred, truth, spacing, p).map(Some)
            }
        };
        let hd100 = hd(100.0)?;
        let hd95 = hd(95.0)?;
        let mut r = MetricsReport {
            dice: o.dice,
            recall: o.recall,
            precision: o.precision,
            hausdorff_variant: variant,
            hausdorff_mm: None,
            hd100_mm: hd100,
            hd95_mm: hd95,
            counts,
            samples: 1,
        };
        r.select(variant);
        Ok(r)
    }

    fn select(&mut self, variant: HausdorffVariant) {
        self.hausdorff_variant = variant;
        self.hausdorff_mm = match variant {
            HausdorffVariant::Hd100 => self.hd100_mm,
            HausdorffVariant::Hd95 => self.hd95_mm,
        };
    }

    /// Mean of the per-pair metrics, weighting every report by its sample
    /// count. Distances average over the reports that define them. The
    /// variant of the first report is kept. `None` for an empty slice.
    pub fn mean(reports: &[MetricsReport]) -> Option<Self> {
        let first = reports.first()?;
        let n: usize = reports.iter().map(|r| r.samples).sum();
        let avg = |f: fn(&MetricsReport) -> f64| reports.iter().map(|r| f(r) * r.samples as f64).sum::<f64>() / n as f64;
        let avg_opt = |f: fn(&MetricsReport) -> Option<f64>| {
            let (s, k) = reports
                .iter()
                .filter_map(|r| f(r).map(|v| (v * r.samples as f64, r.samples)))
                .fold((0.0, 0usize), |(s, k), (v, c)| (s + v, k + c));
            (k > 0).then(|| s / k as f64)
        };
        let mut r = MetricsReport {
            dice: avg(|r| r.dice),
            recall: avg(|r| r.recall),
            precision: avg(|r| r.precision),
            hausdorff_variant: first.hausdorff_variant,
            hausdorff_mm: None,
            hd100_mm: avg_opt(|r| r.hd100_mm),
            hd95_mm: avg_opt(|r| r.hd95_mm),
            counts: reports.iter().fold(ConfusionCounts::default(), |acc, r| acc + r.counts),
            samples: n,
        };
        r.select(first.hausdorff_variant);
        Some(r)
    }

    /// One `key=value` per line; an undefined distance is written as `none`.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |v| v.to_string());
        format!(
            "dice={}\nrecall={}\nprecision={}\nhausdorff_variant={}\nhausdorff_mm={}\nhd100_mm={}\nhd95_mm={}\ntp={}\nfp={}\nfn={}\ntn={}\nsamples={}\n",
            self.dice,
            self.recall,
            self.precision,
            self.hausdorff_variant.label(),
            opt(self.hausdorff_mm),
            opt(self.hd100_mm),
            opt(self.hd95_mm),
            self.counts.tp,
            self.counts.fp,
            self.counts.fn_,
            self.counts.tn,
            self.samples,
        )
    }

    pub fn from_text(text: &str) -> std::result::Result<Self, String> {
        let mut map = std::collections::HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected key=value", n + 1))?;
            map.insert(k.trim(), v.trim());
        }
        let get = |k: &str| map.get(k).copied().ok_or_else(|| format!("missing key {k}"));
        let real = |k: &str| get(k)?.parse::<f64>().map_err(|e| format!("{k}: {e}"));
        let int = |k: &str| get(k)?.parse::<u64>().map_err(|e| format!("{k}: {e}"));
        let opt = |k: &str| match get(k)? {
            "none" => Ok(None),
            v => v.parse::<f64>().map(Some).map_err(|e| format!("{k}: {e}")),
        };
        let variant = match get("hausdorff_variant")? {
            "hd100" => HausdorffVariant::Hd100,
            "hd95" => HausdorffVariant::Hd95,
            other => return Err(format!("unknown hausdorff_variant {other}")),
        };
        Ok(MetricsReport {
            dice: real("dice")?,
            recall: real("recall")?,
            precision: real("precision")?,
            hausdorff_variant: variant,
            hausdorff_mm: opt("hausdorff_mm")?,
            hd100_mm: opt("hd100_mm")?,
            hd95_mm: opt("hd95_mm")?,
            counts: ConfusionCounts { tp: int("tp")?, fp: int("fp")?, fn_: int("fn")?, tn: int("tn")? },
            samples: int("samples")? as usize,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }
}
