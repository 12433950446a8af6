use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Geometry, LabelMask, Result, Sample, Volume};

/// Largest rotation magnitude `augment` will ever apply, in degrees.
pub const MAX_ROTATION_DEG: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Output extents `(D, H, W)`.
    pub crop: [usize; 3],
    /// Angles are drawn from `U(-max, max)`; at most [`MAX_ROTATION_DEG`].
    pub max_rotation_deg: f64,
    pub rotation_probability: f64,
    pub flip_probability: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { crop: [32; 3], max_rotation_deg: MAX_ROTATION_DEG, rotation_probability: 0.5, flip_probability: 0.5 }
    }
}

impl AugmentConfig {
    /// Crop only.
    pub fn crop_only(crop: [usize; 3]) -> Self {
        AugmentConfig { crop, max_rotation_deg: 0.0, rotation_probability: 0.0, flip_probability: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=MAX_ROTATION_DEG).contains(&self.max_rotation_deg) {
            return Err(DataError::InvalidAugment(format!(
                "max_rotation_deg {} outside [0, {MAX_ROTATION_DEG}]",
                self.max_rotation_deg
            )));
        }
        for (name, p) in [("rotation_probability", self.rotation_probability), ("flip_probability", self.flip_probability)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(DataError::InvalidAugment(format!("{name} {p} outside [0, 1]")));
            }
        }
        if self.crop.contains(&0) {
            return Err(DataError::InvalidAugment(format!("zero crop extent in {:?}", self.crop)));
        }
        Ok(())
    }
}

/// What one `augment` call did.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentTrace {
    pub angle_deg: Option<f64>,
    pub flipped: bool,
    pub crop_origin: [usize; 3],
}

/// Random rotation about the depth axis, width flip and random crop, applied
/// identically to volume and mask. Every call draws the same number of
/// values from `rng` whatever the outcome.
pub fn augment(s: &Sample, cfg: &AugmentConfig, rng: &mut impl Rng) -> Result<(Sample, AugmentTrace)> {
    cfg.validate()?;
    let ext = s.geometry().extents;
    if (0..3).any(|a| cfg.crop[a] > ext[a]) {
        return Err(DataError::CropTooLarge { crop: cfg.crop, extents: ext });
    }
    let rotate = rng.random::<f64>() < cfg.rotation_probability;
    let angle = (2.0 * rng.random::<f64>() - 1.0) * cfg.max_rotation_deg;
    let flip = rng.random::<f64>() < cfg.flip_probability;
    let origin: [usize; 3] = std::array::from_fn(|a| rng.random_range(0..=ext[a] - cfg.crop[a]));

    let mut out = if rotate && angle != 0.0 { rotate_axial(s, angle) } else { s.clone() };
    if flip {
        out = flip_width(&out);
    }
    let out = crop(&out, origin, cfg.crop)?;
    Ok((out, AugmentTrace { angle_deg: rotate.then_some(angle), flipped: flip, crop_origin: origin }))
}

/// Rotates every axial slice by `angle_deg` about the grid centre, in
/// physical (spacing-scaled) coordinates. Intensities are resampled
/// bilinearly within the slice, which is trilinear interpolation at on-grid
/// depth positions; samples outside the grid take the volume minimum. The
/// mask is resampled by nearest neighbour with outside voxels as background.
pub fn rotate_axial(s: &Sample, angle_deg: f64) -> Sample {
    let g = *s.geometry();
    let [d, h, w] = g.extents;
    let (sy, sx) = (g.spacing[1], g.spacing[2]);
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let fill = s.volume.intensities.iter().copied().fold(f64::INFINITY, f64::min);
    let mut vol = vec![0.0; g.voxel_count()];
    let mut mask = vec![0u8; g.voxel_count()];
    for y in 0..h {
        for x in 0..w {
            let (py, px) = ((y as f64 - cy) * sy, (x as f64 - cx) * sx);
            // inverse rotation gives the source position
            let qy = (cos * py + sin * px) / sy + cy;
            let qx = (-sin * py + cos * px) / sx + cx;
            let (y0, x0) = (qy.floor(), qx.floor());
            let (fy, fx) = (qy - y0, qx - x0);
            let (y0, x0) = (y0 as isize, x0 as isize);
            let (ny, nx) = (qy.round() as isize, qx.round() as isize);
            let near_in = ny >= 0 && nx >= 0 && (ny as usize) < h && (nx as usize) < w;
            for z in 0..d {
                let at = |yy: isize, xx: isize| {
                    if yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w {
                        s.volume.intensities[g.index(z, yy as usize, xx as usize)]
                    } else {
                        fill
                    }
                };
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1) * fx;
                let bottom = at(y0 + 1, x0) * (1.0 - fx) + at(y0 + 1, x0 + 1) * fx;
                let i = g.index(z, y, x);
                vol[i] = top * (1.0 - fy) + bottom * fy;
                if near_in {
                    mask[i] = s.mask.values[g.index(z, ny as usize, nx as usize)];
                }
            }
        }
    }
    Sample { id: s.id.clone(), volume: Volume::new(g, vol), mask: LabelMask::new(g, mask) }
}

/// Mirrors the width axis.
pub fn flip_width(s: &Sample) -> Sample {
    let g = *s.geometry();
    let w = g.extents[2];
    let mut vol = s.volume.intensities.clone();
    let mut mask = s.mask.values.clone();
    for row in 0..g.extents[0] * g.extents[1] {
        vol[row * w..(row + 1) * w].reverse();
        mask[row * w..(row + 1) * w].reverse();
    }
    Sample { id: s.id.clone(), volume: Volume::new(g, vol), mask: LabelMask::new(g, mask) }
}

/// The sub-grid starting at voxel `origin` with `extents`; the physical
/// origin moves accordingly.
pub fn crop(s: &Sample, origin: [usize; 3], extents: [usize; 3]) -> Result<Sample> {
    let g = *s.geometry();
    if (0..3).any(|a| origin[a] + extents[a] > g.extents[a] || extents[a] == 0) {
        return Err(DataError::CropTooLarge { crop: extents, extents: g.extents });
    }
    let out = Geometry {
        extents,
        spacing: g.spacing,
        origin: std::array::from_fn(|a| g.origin[a] + origin[a] as f64 * g.spacing[a]),
    };
    let mut vol = Vec::with_capacity(out.voxel_count());
    let mut mask = Vec::with_capacity(out.voxel_count());
    for z in 0..extents[0] {
        for y in 0..extents[1] {
            let start = g.index(z + origin[0], y + origin[1], origin[2]);
            vol.extend_from_slice(&s.volume.intensities[start..start + extents[2]]);
            mask.extend_from_slice(&s.mask.values[start..start + extents[2]]);
        }
    }
    Ok(Sample { id: s.id.clone(), volume: Volume::new(out, vol), mask: LabelMask::new(out, mask) })
}
