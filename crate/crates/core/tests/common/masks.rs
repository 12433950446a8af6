//! Mask generators and brute-force metric oracles.

use agfa_core::data::LabelMask;
use rand::Rng;

pub fn random_mask(ext: [usize; 3], density: f64, r: &mut impl Rng) -> LabelMask {
    let n = ext.iter().product();
    LabelMask::from_values(ext, (0..n).map(|_| r.random_bool(density) as u8).collect::<Vec<_>>())
}

/// Blobs grown from a few seeds, so boundaries are not just every voxel.
pub fn blobby_mask(ext: [usize; 3], r: &mut impl Rng) -> LabelMask {
    let seeds: Vec<[f64; 4]> = (0..r.random_range(1..4))
        .map(|_| {
            [
                r.random_range(0.0..ext[0] as f64),
                r.random_range(0.0..ext[1] as f64),
                r.random_range(0.0..ext[2] as f64),
                r.random_range(0.8..3.5),
            ]
        })
        .collect();
    let mut v = Vec::new();
    for z in 0..ext[0] {
        for y in 0..ext[1] {
            for x in 0..ext[2] {
                let inside = seeds.iter().any(|s| {
                    let d = (z as f64 - s[0]).powi(2) + (y as f64 - s[1]).powi(2) + (x as f64 - s[2]).powi(2);
                    d <= s[3] * s[3]
                });
                v.push((inside || r.random_bool(0.02)) as u8);
            }
        }
    }
    LabelMask::from_values(ext, v)
}

fn coords(mask: &[bool], ext: [usize; 3], spacing: [f64; 3]) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    for (i, &b) in mask.iter().enumerate() {
        if b {
            let (z, y, x) = (i / (ext[1] * ext[2]), (i / ext[2]) % ext[1], i % ext[2]);
            out.push([z as f64 * spacing[0], y as f64 * spacing[1], x as f64 * spacing[2]]);
        }
    }
    out
}

/// Exhaustive all-pairs boundary distances; boundary found by direct
/// neighbour inspection.
pub fn brute_hausdorff(a: &LabelMask, b: &LabelMask, spacing: [f64; 3], pct: f64) -> f64 {
    let ext = a.extents();
    let bnd = |m: &LabelMask| -> Vec<bool> {
        let mut out = vec![false; m.values.len()];
        for z in 0..ext[0] as isize {
            for y in 0..ext[1] as isize {
                for x in 0..ext[2] as isize {
                    let on = |z: isize, y: isize, x: isize| {
                        z >= 0
                            && y >= 0
                            && x >= 0
                            && (z as usize) < ext[0]
                            && (y as usize) < ext[1]
                            && (x as usize) < ext[2]
                            && m.get(z as usize, y as usize, x as usize)
                    };
                    if on(z, y, x) {
                        let all = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
                            .iter()
                            .all(|&(dz, dy, dx)| on(z + dz, y + dy, x + dx));
                        out[((z as usize) * ext[1] + y as usize) * ext[2] + x as usize] = !all;
                    }
                }
            }
        }
        out
    };
    let (pa, pb) = (coords(&bnd(a), ext, spacing), coords(&bnd(b), ext, spacing));
    let directed = |from: &[[f64; 3]], to: &[[f64; 3]]| {
        let mut d: Vec<f64> = from
            .iter()
            .map(|p| {
                to.iter()
                    .map(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        d.sort_by(|x, y| x.total_cmp(y));
        let rank = pct / 100.0 * (d.len() - 1) as f64;
        let (lo, hi) = (rank.floor() as usize, rank.ceil() as usize);
        d[lo] + (d[hi] - d[lo]) * (rank - lo as f64)
    };
    directed(&pa, &pb).max(directed(&pb, &pa))
}

pub fn naive_close(m: &LabelMask, rad: usize) -> LabelMask {
    let [d, h, w] = m.extents();
    let r = rad as isize;
    let at = |z: isize, y: isize, x: isize| z * (h * w) as isize + y * w as isize + x;
    let inside = |z: isize, y: isize, x: isize| z >= 0 && y >= 0 && x >= 0 && z < d as isize && y < h as isize && x < w as isize;
    // dilation on an unbounded grid, kept in a window padded by r
    let (pd, ph, pw) = (d as isize + 2 * r, h as isize + 2 * r, w as isize + 2 * r);
    let mut dil = vec![false; (pd * ph * pw) as usize];
    for z in -r..d as isize + r {
        for y in -r..h as isize + r {
            for x in -r..w as isize + r {
                let mut hit = false;
                for dz in -r..=r {
                    for dy in -r..=r {
                        for dx in -r..=r {
                            let (a, b, c) = (z + dz, y + dy, x + dx);
                            hit |= inside(a, b, c) && m.values[at(a, b, c) as usize] == 1;
                        }
                    }
                }
                dil[(((z + r) * ph + y + r) * pw + x + r) as usize] = hit;
            }
        }
    }
    let dil_at = |z: isize, y: isize, x: isize| {
        let (a, b, c) = (z + r, y + r, x + r);
        a >= 0 && b >= 0 && c >= 0 && a < pd && b < ph && c < pw && dil[((a * ph + b) * pw + c) as usize]
    };
    let mut out = vec![0u8; m.values.len()];
    for z in 0..d as isize {
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut all = true;
                for dz in -r..=r {
                    for dy in -r..=r {
                        for dx in -r..=r {
                            all &= dil_at(z + dz, y + dy, x + dx);
                        }
                    }
                }
                out[at(z, y, x) as usize] = all as u8;
            }
        }
    }
    LabelMask::new(m.geometry.clone(), out)
}
