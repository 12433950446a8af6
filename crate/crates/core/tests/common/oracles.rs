//! Direct-loop reference implementations.

use agfa_core::tensor::ConvParams;

/// Six nested loops over output position and kernel tap (plus channels).
/// `x` is `[C_in, D, H, W]`, `w` is `[C_out, C_in, kd, kh, kw]`.
pub fn conv3d_naive(x: &[f64], sp: [usize; 3], w: &[f64], b: Option<&[f64]>, p: &ConvParams) -> (Vec<f64>, [usize; 3]) {
    let out_ext: Vec<usize> = (0..3)
        .map(|a| (sp[a] + 2 * p.padding[a] - p.dilation[a] * (p.kernel[a] - 1) - 1) / p.stride[a] + 1)
        .collect();
    let [od, oh, ow] = [out_ext[0], out_ext[1], out_ext[2]];
    let [kd, kh, kw] = p.kernel;
    let mut out = vec![0.0; p.out_channels * od * oh * ow];
    for co in 0..p.out_channels {
        for z in 0..od {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = b.map_or(0.0, |b| b[co]);
                    for ci in 0..p.in_channels {
                        for a in 0..kd {
                            for bb in 0..kh {
                                for c in 0..kw {
                                    let iz = (z * p.stride[0] + a * p.dilation[0]) as isize - p.padding[0] as isize;
                                    let iy = (y * p.stride[1] + bb * p.dilation[1]) as isize - p.padding[1] as isize;
                                    let ix = (xx * p.stride[2] + c * p.dilation[2]) as isize - p.padding[2] as isize;
                                    if iz < 0 || iy < 0 || ix < 0 {
                                        continue;
                                    }
                                    let (iz, iy, ix) = (iz as usize, iy as usize, ix as usize);
                                    if iz >= sp[0] || iy >= sp[1] || ix >= sp[2] {
                                        continue;
                                    }
                                    let xi = ((ci * sp[0] + iz) * sp[1] + iy) * sp[2] + ix;
                                    let wi = (((co * p.in_channels + ci) * kd + a) * kh + bb) * kw + c;
                                    acc += w[wi] * x[xi];
                                }
                            }
                        }
                    }
                    out[((co * od + z) * oh + y) * ow + xx] = acc;
                }
            }
        }
    }
    (out, [od, oh, ow])
}

/// Windowed max or mean over a `[C, D, H, W]` buffer.
pub fn pool_naive(x: &[f64], c: usize, sp: [usize; 3], window: usize, stride: usize, max: bool) -> Vec<f64> {
    let o: Vec<usize> = sp.iter().map(|&e| (e - window) / stride + 1).collect();
    let mut out = Vec::new();
    for ch in 0..c {
        for z in 0..o[0] {
            for y in 0..o[1] {
                for xx in 0..o[2] {
                    let mut vals = Vec::new();
                    for a in 0..window {
                        for b in 0..window {
                            for k in 0..window {
                                let (iz, iy, ix) = (z * stride + a, y * stride + b, xx * stride + k);
                                vals.push(x[((ch * sp[0] + iz) * sp[1] + iy) * sp[2] + ix]);
                            }
                        }
                    }
                    out.push(if max {
                        vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                    } else {
                        vals.iter().sum::<f64>() / vals.len() as f64
                    });
                }
            }
        }
    }
    out
}

pub fn matmul_naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for t in 0..k {
                c[i * n + j] += a[i * k + t] * b[t * n + j];
            }
        }
    }
    c
}

/// Neumaier-compensated sum.
pub fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}

/// `exp(x_i) / sum_j exp(x_j)` without max subtraction, compensated sum.
pub fn softmax_row_precise(row: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = row.iter().map(|v| v.exp()).collect();
    let z = compensated_sum(e.iter().copied());
    e.iter().map(|v| v / z).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-voxel trilinear doubling with half-pixel centres, clamped at borders.
pub fn upsample_naive(x: &[f64], c: usize, sp: [usize; 3]) -> Vec<f64> {
    let coord = |o: usize, n: usize| {
        let s = ((o as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = s.floor() as usize;
        (i0, (i0 + 1).min(n - 1), s - i0 as f64)
    };
    let [d, h, w] = sp;
    let mut out = Vec::with_capacity(c * 8 * d * h * w);
    for ch in 0..c {
        for z in 0..2 * d {
            for y in 0..2 * h {
                for xx in 0..2 * w {
                    let (z0, z1, fz) = coord(z, d);
                    let (y0, y1, fy) = coord(y, h);
                    let (x0, x1, fx) = coord(xx, w);
                    let mut acc = 0.0;
                    for (zi, wz) in [(z0, 1.0 - fz), (z1, fz)] {
                        for (yi, wy) in [(y0, 1.0 - fy), (y1, fy)] {
                            for (xi, wx) in [(x0, 1.0 - fx), (x1, fx)] {
                                acc += wz * wy * wx * x[((ch * d + zi) * h + yi) * w + xi];
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

/// Train-mode batch norm (biased variance, eps 1e-5) of a single sample.
pub fn batch_norm_naive(x: &[f64], c: usize, scale: &[f64], shift: &[f64]) -> Vec<f64> {
    let vol = x.len() / c;
    let mut out = vec![0.0; x.len()];
    for ch in 0..c {
        let v = &x[ch * vol..(ch + 1) * vol];
        let m = v.iter().sum::<f64>() / vol as f64;
        let var = v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / vol as f64;
        for i in 0..vol {
            out[ch * vol + i] = scale[ch] * (v[i] - m) / (var + 1e-5).sqrt() + shift[ch];
        }
    }
    out
}

/// `[C, hidden]` then `[hidden, C]` with a ReLU between, on one vector.
pub fn mlp_naive(v: &[f64], w1: &[f64], w2: &[f64], hidden: usize) -> Vec<f64> {
    let c = v.len();
    let h: Vec<f64> = (0..hidden).map(|j| (0..c).map(|i| v[i] * w1[i * hidden + j]).sum::<f64>().max(0.0)).collect();
    (0..c).map(|k| (0..hidden).map(|j| h[j] * w2[j * c + k]).sum()).collect()
}
