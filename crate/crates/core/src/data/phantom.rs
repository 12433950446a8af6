//! Synthetic vessel trees standing in for real angiography scans.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DataError, Geometry, LabelMask, Result, Sample, Volume};
use crate::metrics::largest_component;
use crate::tensor::seeded_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub seed: u64,
    pub extents: [usize; 3],
    /// mm per voxel along `(D, H, W)`.
    pub spacing: [f64; 3],
    /// Number of tube segments: one trunk plus `branch_count - 1` side branches.
    pub branch_count: usize,
    /// Tube radius bounds in mm; the lower bound must cover one voxel on
    /// every axis.
    pub radius_range: [f64; 2],
    /// Standard deviation of the direction change per mm of centreline.
    pub curvature: f64,
    pub vessel_intensity: f64,
    pub background_intensity: f64,
    pub noise_sigma: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            seed: 0,
            extents: [32; 3],
            spacing: [0.5; 3],
            branch_count: 3,
            radius_range: [0.6, 1.4],
            curvature: 0.15,
            vessel_intensity: 1.0,
            background_intensity: 0.0,
            noise_sigma: 0.1,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let g = Geometry { extents: self.extents, spacing: self.spacing, origin: [0.0; 3] };
        g.validate()?;
        let bad = |m: String| Err(DataError::InvalidPhantom(m));
        if self.extents.iter().any(|&e| e < 8) {
            return bad(format!("extents {:?} below 8 voxels", self.extents));
        }
        if self.branch_count == 0 {
            return bad("branch_count must be positive".into());
        }
        let [lo, hi] = self.radius_range;
        let voxel = self.spacing.iter().copied().fold(0.0, f64::max);
        if lo < voxel || hi < lo {
            return bad(format!("radius_range {:?} must satisfy {voxel} <= min <= max", self.radius_range));
        }
        if !(self.curvature >= 0.0 && self.noise_sigma >= 0.0) {
            return bad("curvature and noise_sigma must be non-negative".into());
        }
        Ok(())
    }
}

/// A sampled tube axis in mm with the radius at every point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centerline {
    pub points: Vec<[f64; 3]>,
    pub radii: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub sample: Sample,
    /// The trunk first, then branches in creation order.
    pub centerlines: Vec<Centerline>,
}

impl Phantom {
    /// Free tube ends: both ends of the trunk and the far end of each branch.
    pub fn endpoints(&self) -> Vec<[f64; 3]> {
        let mut out = Vec::new();
        for (i, c) in self.centerlines.iter().enumerate() {
            if i == 0 {
                out.push(c.points[0]);
            }
            out.push(*c.points.last().expect("non-empty centreline"));
        }
        out
    }
}

fn add(a: [f64; 3], b: [f64; 3], k: f64) -> [f64; 3] {
    [a[0] + k * b[0], a[1] + k * b[1], a[2] + k * b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn unit(a: [f64; 3]) -> [f64; 3] {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

fn gaussian3(rng: &mut impl Rng) -> [f64; 3] {
    std::array::from_fn(|_| StandardNormal.sample(rng))
}

struct Walker<'a> {
    spec: &'a PhantomSpec,
    upper: [f64; 3],
    step: f64,
}

impl Walker<'_> {
    fn inside(&self, p: [f64; 3]) -> bool {
        (0..3).all(|a| p[a] >= 0.0 && p[a] <= self.upper[a])
    }

    /// Walks from `start` until the grid is left, tapering the radius from
    /// `r0` towards 70% of it.
    fn walk(&self, start: [f64; 3], dir: [f64; 3], r0: f64, rng: &mut impl Rng) -> Centerline {
        let max_steps = (self.upper.iter().map(|u| u * u).sum::<f64>().sqrt() * 1.5 / self.step) as usize;
        let mut points = vec![start];
        let mut d = unit(dir);
        let jitter = self.spec.curvature * self.step;
        while points.len() < max_steps {
            d = unit(add(d, gaussian3(rng), jitter));
            let next = add(*points.last().expect("seeded"), d, self.step);
            if !self.inside(next) {
                break;
            }
            points.push(next);
        }
        let n = points.len();
        let r_min = self.spec.radius_range[0];
        let radii = (0..n)
            .map(|i| {
                let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
                (r0 * (1.0 - 0.3 * t)).max(r_min)
            })
            .collect();
        Centerline { points, radii }
    }
}

/// Any unit vector perpendicular to `d`.
fn perpendicular(d: [f64; 3], rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let r = gaussian3(rng);
        let p = add(r, d, -dot(r, d));
        if dot(p, p) > 1e-6 {
            return unit(p);
        }
    }
}

fn rasterize(lines: &[Centerline], g: &Geometry) -> Vec<u8> {
    let mut mask = vec![0u8; g.voxel_count()];
    for c in lines {
        for i in 0..c.points.len() {
            let a = c.points[i];
            let b = c.points[(i + 1).min(c.points.len() - 1)];
            let (ra, rb) = (c.radii[i], c.radii[(i + 1).min(c.radii.len() - 1)]);
            let r = ra.max(rb);
            let lo: [usize; 3] = std::array::from_fn(|k| ((a[k].min(b[k]) - r) / g.spacing[k]).floor().max(0.0) as usize);
            let hi: [usize; 3] = std::array::from_fn(|k| {
                (((a[k].max(b[k]) + r) / g.spacing[k]).ceil() as usize).min(g.extents[k] - 1)
            });
            let ab = add(b, a, -1.0);
            let len2 = dot(ab, ab);
            for z in lo[0]..=hi[0] {
                for y in lo[1]..=hi[1] {
                    for x in lo[2]..=hi[2] {
                        let p = [z as f64 * g.spacing[0], y as f64 * g.spacing[1], x as f64 * g.spacing[2]];
                        let t = if len2 > 0.0 { (dot(add(p, a, -1.0), ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
                        let q = add(a, ab, t);
                        let rad = ra + (rb - ra) * t;
                        let off = add(p, q, -1.0);
                        if dot(off, off) <= rad * rad {
                            mask[g.index(z, y, x)] = 1;
                        }
                    }
                }
            }
        }
    }
    mask
}

/// Draws a branching tube tree and renders it. Deterministic in `spec`.
///
/// The trunk enters near the first depth slice and runs roughly along the
/// depth axis; each branch leaves a random interior point of an earlier
/// tube at 35 to 70 degrees. Only the largest 26-connected part of the
/// rasterized tree is kept, so the mask is always a single component.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let mut rng = seeded_rng(spec.seed);
    let g = Geometry { extents: spec.extents, spacing: spec.spacing, origin: [0.0; 3] };
    let upper: [f64; 3] = std::array::from_fn(|a| (spec.extents[a] - 1) as f64 * spec.spacing[a]);
    let step = spec.spacing.iter().copied().fold(f64::INFINITY, f64::min);
    let walker = Walker { spec, upper, step };
    let [r_min, r_max] = spec.radius_range;
    let min_len = 6;

    let mut lines: Vec<Centerline> = Vec::new();
    for _ in 0..100 {
        let start = [
            spec.spacing[0],
            upper[1] * rng.random_range(0.3..0.7),
            upper[2] * rng.random_range(0.3..0.7),
        ];
        let dir = [1.0, rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4)];
        let trunk = walker.walk(start, dir, r_max, &mut rng);
        if trunk.points.len() >= min_len {
            lines.push(trunk);
            break;
        }
    }
    if lines.is_empty() {
        return Err(DataError::InvalidPhantom("could not place a trunk".into()));
    }

    let clearance = 2.0 * r_max + step;
    while lines.len() < spec.branch_count {
        let mut placed = None;
        for _ in 0..200 {
            let parent = &lines[rng.random_range(0..lines.len())];
            let n = parent.points.len();
            let at = rng.random_range(n / 5..=(4 * n / 5).max(n / 5));
            let here = parent.points[at];
            let tangent = unit(add(parent.points[(at + 1).min(n - 1)], parent.points[at.saturating_sub(1)], -1.0));
            let angle = rng.random_range(35f64..70.0).to_radians();
            let side = perpendicular(tangent, &mut rng);
            let dir = add([tangent[0] * angle.cos(), tangent[1] * angle.cos(), tangent[2] * angle.cos()], side, angle.sin());
            let r0 = (parent.radii[at] * 0.8).max(r_min);
            let branch = walker.walk(here, dir, r0, &mut rng);
            if branch.points.len() < min_len {
                continue;
            }
            // the free end must stand apart from every other tube
            let end = *branch.points.last().expect("non-empty");
            let apart = lines.iter().all(|c| {
                c.points.iter().all(|&p| {
                    let o = add(p, end, -1.0);
                    dot(o, o) > clearance * clearance
                })
            });
            if apart {
                placed = Some(branch);
                break;
            }
        }
        match placed {
            Some(b) => lines.push(b),
            None => return Err(DataError::InvalidPhantom(format!("could not place branch {}", lines.len()))),
        }
    }

    let mask = largest_component(&LabelMask::new(g, rasterize(&lines, &g)));
    let noise = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
    let intensities = mask
        .values
        .iter()
        .map(|&m| {
            let base = if m == 1 { spec.vessel_intensity } else { spec.background_intensity };
            if spec.noise_sigma > 0.0 {
                base + noise.sample(&mut rng)
            } else {
                base
            }
        })
        .collect();
    let sample = Sample::new(format!("phantom_{:04}", spec.seed), Volume::new(g, intensities), mask)?;
    Ok(Phantom { sample, centerlines: lines })
}
