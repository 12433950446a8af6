use serde::{Deserialize, Serialize};

use super::{MetricsError, Result};
use crate::data::LabelMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HausdorffVariant {
    /// Classic (maximum) Hausdorff distance.
    Hd100,
    /// 95th percentile.
    Hd95,
}

impl HausdorffVariant {
    pub fn percentile(self) -> f64 {
        match self {
            HausdorffVariant::Hd100 => 100.0,
            HausdorffVariant::Hd95 => 95.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            HausdorffVariant::Hd100 => "hd100",
            HausdorffVariant::Hd95 => "hd95",
        }
    }
}

/// Foreground voxels with a background (or out-of-grid) 6-neighbour.
pub fn boundary(mask: &LabelMask) -> Vec<bool> {
    let [d, h, w] = mask.extents();
    let g = &mask.geometry;
    let mut out = vec![false; mask.values.len()];
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let i = g.index(z, y, x);
                if mask.values[i] == 0 {
                    continue;
                }
                let edge = z == 0 || y == 0 || x == 0 || z + 1 == d || y + 1 == h || x + 1 == w;
                out[i] = edge
                    || !mask.get(z - 1, y, x)
                    || !mask.get(z + 1, y, x)
                    || !mask.get(z, y - 1, x)
                    || !mask.get(z, y + 1, x)
                    || !mask.get(z, y, x - 1)
                    || !mask.get(z, y, x + 1);
            }
        }
    }
    out
}

/// Squared distance transform of one line: `out[q] = min_i (s (q - i))^2 + f[i]`
/// by the lower envelope of parabolas.
fn edt_line(f: &[f64], s: f64, v: &mut Vec<usize>, zb: &mut Vec<f64>, out: &mut [f64]) {
    v.clear();
    zb.clear();
    let s2 = s * s;
    let key = |i: usize| f[i] + s2 * (i * i) as f64;
    for q in 0..f.len() {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    zb.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let cross = (key(q) - key(p)) / (2.0 * s2 * (q - p) as f64);
                    if cross <= *zb.last().expect("parallel to v") {
                        v.pop();
                        zb.pop();
                    } else {
                        v.push(q);
                        zb.push(cross);
                        break;
                    }
                }
            }
        }
    }
    if v.is_empty() {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while k + 1 < v.len() && zb[k + 1] < q as f64 {
            k += 1;
        }
        let dq = s * (q as f64 - v[k] as f64);
        *o = dq * dq + f[v[k]];
    }
}

/// Exact squared Euclidean distance (in mm^2) from every voxel to the nearest
/// `true` voxel of `features`.
fn squared_distance_field(features: &[bool], ext: [usize; 3], spacing: [f64; 3]) -> Vec<f64> {
    let [d, h, w] = ext;
    let mut field: Vec<f64> = features.iter().map(|&f| if f { 0.0 } else { f64::INFINITY }).collect();
    let (mut v, mut zb) = (Vec::new(), Vec::new());
    let mut line = Vec::new();
    let mut out = Vec::new();
    // axis 2 (W), then 1 (H), then 0 (D)
    for axis in [2usize, 1, 0] {
        let n = ext[axis];
        let stride = match axis {
            0 => h * w,
            1 => w,
            _ => 1,
        };
        let starts: Vec<usize> = (0..d * h * w).filter(|&i| (i / stride) % n == 0).collect();
        line.resize(n, 0.0);
        out.resize(n, 0.0);
        for s in starts {
            for k in 0..n {
                line[k] = field[s + k * stride];
            }
            edt_line(&line, spacing[axis], &mut v, &mut zb, &mut out);
            for k in 0..n {
                field[s + k * stride] = out[k];
            }
        }
    }
    field
}

/// Linear-interpolated percentile (`p` in (0, 100]) of unsorted values.
pub fn percentile(values: &mut [f64], p: f64) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let rank = p / 100.0 * (values.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    values[lo] + (values[hi] - values[lo]) * (rank - lo as f64)
}

fn directed(from: &[bool], to_field: &[f64], p: f64) -> f64 {
    let mut d: Vec<f64> = from.iter().zip(to_field).filter(|(&b, _)| b).map(|(_, &sq)| sq.sqrt()).collect();
    percentile(&mut d, p)
}

/// Symmetric Hausdorff distance in mm between the boundary voxel centres of
/// two masks: the larger of the two directed `percentile`-th distances.
/// `percentile = 100` gives the classic distance, 95 gives HD95.
///
/// Masks are compared through their boundaries, so two different masks
/// with identical boundary sets (a solid block and the same block with an
/// interior hole of one voxel, say) are at distance 0.
pub fn hausdorff_distance(a: &LabelMask, b: &LabelMask, spacing: [f64; 3], percentile: f64) -> Result<f64> {
    if a.extents() != b.extents() {
        return Err(MetricsError::ShapeMismatch { left: a.extents().to_vec(), right: b.extents().to_vec() });
    }
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(MetricsError::Percentile(percentile));
    }
    if a.is_empty() {
        return Err(MetricsError::EmptyMask { which: "first" });
    }
    if b.is_empty() {
        return Err(MetricsError::EmptyMask { which: "second" });
    }
    let (ba, bb) = (boundary(a), boundary(b));
    let fa = squared_distance_field(&ba, a.extents(), spacing);
    let fb = squared_distance_field(&bb, a.extents(), spacing);
    Ok(directed(&ba, &fb, percentile).max(directed(&bb, &fa, percentile)))
}
