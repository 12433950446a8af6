//! Binary morphology on label masks with a cubic structuring element of
//! Chebyshev radius `r` (side `2r + 1`). Voxels outside the grid count as
//! background.

use std::collections::VecDeque;

use crate::data::{Geometry, LabelMask};

fn strides(ext: [usize; 3]) -> [usize; 3] {
    [ext[1] * ext[2], ext[2], 1]
}

/// One separable pass: `out[i] = op over the window of radius r along axis`.
/// `grow` selects max (dilation) and otherwise min (erosion).
fn pass(values: &[u8], ext: [usize; 3], axis: usize, r: usize, grow: bool) -> Vec<u8> {
    let n = ext[axis];
    let stride = strides(ext)[axis];
    let mut out = vec![0u8; values.len()];
    let mut prefix = vec![0usize; n + 1];
    for start in (0..values.len()).filter(|&i| (i / stride) % n == 0) {
        for k in 0..n {
            prefix[k + 1] = prefix[k] + values[start + k * stride] as usize;
        }
        for k in 0..n {
            let lo = k.saturating_sub(r);
            let hi = (k + r + 1).min(n);
            let ones = prefix[hi] - prefix[lo];
            let hit = if grow {
                ones > 0
            } else {
                // a window clipped by the grid edge sees background
                ones == 2 * r + 1
            };
            out[start + k * stride] = hit as u8;
        }
    }
    out
}

fn separable(mask: &LabelMask, r: usize, grow: bool) -> LabelMask {
    if r == 0 {
        return mask.clone();
    }
    let ext = mask.extents();
    let mut v = mask.values.clone();
    for axis in 0..3 {
        v = pass(&v, ext, axis, r, grow);
    }
    LabelMask { geometry: mask.geometry.clone(), values: v }
}

pub fn dilate(mask: &LabelMask, radius: usize) -> LabelMask {
    separable(mask, radius, true)
}

pub fn erode(mask: &LabelMask, radius: usize) -> LabelMask {
    separable(mask, radius, false)
}

/// Dilation then erosion, computed on a grid padded by `radius` so the grid
/// edge does not erode structures that touch it.
pub fn closing(mask: &LabelMask, radius: usize) -> LabelMask {
    if radius == 0 {
        return mask.clone();
    }
    let [d, h, w] = mask.extents();
    let p = radius;
    let pext = [d + 2 * p, h + 2 * p, w + 2 * p];
    let mut padded = LabelMask { geometry: Geometry::unit(pext), values: vec![0; pext.iter().product()] };
    for z in 0..d {
        for y in 0..h {
            let src = mask.geometry.index(z, y, 0);
            let dst = padded.geometry.index(z + p, y + p, p);
            padded.values[dst..dst + w].copy_from_slice(&mask.values[src..src + w]);
        }
    }
    let closed = erode(&dilate(&padded, radius), radius);
    let mut out = LabelMask { geometry: mask.geometry.clone(), values: vec![0; mask.values.len()] };
    for z in 0..d {
        for y in 0..h {
            let src = closed.geometry.index(z + p, y + p, p);
            let dst = out.geometry.index(z, y, 0);
            out.values[dst..dst + w].copy_from_slice(&closed.values[src..src + w]);
        }
    }
    out
}

/// 26-connected components. `labels` holds 0 for background and `k + 1`
/// for component `k`; components are numbered in raster order of their
/// first voxel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    pub labels: Vec<u32>,
    pub sizes: Vec<usize>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }
}

pub fn connected_components(mask: &LabelMask) -> Components {
    let ext = mask.extents();
    let [d, h, w] = ext;
    let mut labels = vec![0u32; mask.values.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for seed in 0..mask.values.len() {
        if mask.values[seed] == 0 || labels[seed] != 0 {
            continue;
        }
        let id = sizes.len() as u32 + 1;
        labels[seed] = id;
        queue.push_back(seed);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (z, y, x) = (i / (h * w), (i / w) % h, i % w);
            for nz in z.saturating_sub(1)..(z + 2).min(d) {
                for ny in y.saturating_sub(1)..(y + 2).min(h) {
                    for nx in x.saturating_sub(1)..(x + 2).min(w) {
                        let j = (nz * h + ny) * w + nx;
                        if mask.values[j] != 0 && labels[j] == 0 {
                            labels[j] = id;
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
        sizes.push(size);
    }
    Components { labels, sizes }
}

/// Keeps the largest 26-connected component; among equal sizes the one
/// found first in raster order wins. An empty mask stays empty.
pub fn largest_component(mask: &LabelMask) -> LabelMask {
    let comps = connected_components(mask);
    let mut out = LabelMask { geometry: mask.geometry.clone(), values: vec![0; mask.values.len()] };
    let mut best: Option<(usize, usize)> = None;
    for (k, &s) in comps.sizes.iter().enumerate() {
        if best.is_none_or(|(_, bs)| s > bs) {
            best = Some((k, s));
        }
    }
    if let Some((k, _)) = best {
        let id = k as u32 + 1;
        for (o, &l) in out.values.iter_mut().zip(&comps.labels) {
            *o = (l == id) as u8;
        }
    }
    out
}

/// Morphological closing followed by largest-component selection.
pub fn postprocess(mask: &LabelMask, radius: usize) -> LabelMask {
    largest_component(&closing(mask, radius))
}
