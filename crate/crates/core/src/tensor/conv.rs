use super::linalg::{gemm_ld, MatRef};
use super::{spatial_dims, spatial_shape, Result, Tensor, TensorError};

/// Geometry of a 3D convolution. Kernels are cross-correlated (no flip).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvParams {
    pub kernel: [usize; 3],
    pub dilation: [usize; 3],
    pub padding: [usize; 3],
    pub stride: [usize; 3],
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvParams {
    /// Stride 1 with "same" padding `dilation * (k - 1) / 2` on every axis.
    pub fn same(in_channels: usize, out_channels: usize, kernel: [usize; 3], dilation: usize) -> Self {
        ConvParams {
            kernel,
            dilation: [dilation; 3],
            padding: [0, 1, 2].map(|a| dilation * (kernel[a] - 1) / 2),
            stride: [1; 3],
            in_channels,
            out_channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(TensorError::ConvParams("channel counts must be positive".into()));
        }
        for a in 0..3 {
            if self.kernel[a] == 0 || self.kernel[a] % 2 == 0 {
                return Err(TensorError::ConvParams(format!("kernel extent {} on axis {a} must be odd", self.kernel[a])));
            }
            if self.dilation[a] == 0 || self.stride[a] == 0 {
                return Err(TensorError::ConvParams(format!("dilation and stride on axis {a} must be positive")));
            }
        }
        Ok(())
    }

    pub fn weight_shape(&self) -> [usize; 5] {
        [self.out_channels, self.in_channels, self.kernel[0], self.kernel[1], self.kernel[2]]
    }

    pub fn kernel_volume(&self) -> usize {
        self.kernel.iter().product()
    }

    /// Output extents for the given input extents; errors when any axis is empty.
    pub fn output_extents(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            let padded = input[a] + 2 * self.padding[a];
            let reach = self.dilation[a] * (self.kernel[a] - 1) + 1;
            if padded < reach {
                return Err(TensorError::EmptyOutput { axis: a });
            }
            out[a] = (padded - reach) / self.stride[a] + 1;
        }
        Ok(out)
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == [1; 3] && self.stride == [1; 3] && self.padding == [0; 3]
    }

    /// Few output channels make im2col mostly copying; shifted row updates
    /// are cheaper there.
    fn is_direct(&self) -> bool {
        self.out_channels <= 2 && self.stride == [1; 3] && !self.is_pointwise()
    }
}

/// Upper bound on im2col buffer elements per chunk.
const CHUNK_ELEMS: usize = 1 << 20;

struct Geometry {
    p: ConvParams,
    input: [usize; 3],
    output: [usize; 3],
}

impl Geometry {
    fn rows(&self) -> usize {
        self.p.in_channels * self.p.kernel_volume()
    }

    fn plane(&self) -> usize {
        self.output[1] * self.output[2]
    }

    fn planes_per_chunk(&self) -> usize {
        (CHUNK_ELEMS / (self.rows() * self.plane()).max(1)).clamp(1, self.output[0])
    }

    /// Valid output index range along one axis for kernel offset `k`.
    fn valid(&self, axis: usize, k: usize) -> (usize, usize) {
        let (s, d, pad) = (self.p.stride[axis], self.p.dilation[axis], self.p.padding[axis]);
        let n_in = self.input[axis] as isize;
        let n_out = self.output[axis];
        let shift = (k * d) as isize - pad as isize;
        // o*s + shift in [0, n_in)
        let lo = if shift >= 0 { 0 } else { ((-shift) as usize).div_ceil(s) };
        let hi = if n_in - shift <= 0 { 0 } else { ((n_in - shift - 1) as usize / s + 1).min(n_out) };
        (lo.min(n_out), hi.max(lo.min(n_out)))
    }

    /// Fills `cols` (rows x planes*plane) for output depth planes `d0..d1`.
    fn im2col(&self, x: &[f64], d0: usize, d1: usize, cols: &mut [f64]) {
        let [kd, kh, kw] = self.p.kernel;
        let [_, ih, iw] = self.input;
        let [_, oh, ow] = self.output;
        let width = (d1 - d0) * oh * ow;
        let in_plane = ih * iw;
        let in_vol = self.input[0] * in_plane;
        let s = self.p.stride;
        let mut row = 0;
        for c in 0..self.p.in_channels {
            let xc = &x[c * in_vol..(c + 1) * in_vol];
            for a in 0..kd {
                let (dlo, dhi) = self.valid(0, a);
                let dshift = (a * self.p.dilation[0]) as isize - self.p.padding[0] as isize;
                for b in 0..kh {
                    let (hlo, hhi) = self.valid(1, b);
                    let hshift = (b * self.p.dilation[1]) as isize - self.p.padding[1] as isize;
                    for k in 0..kw {
                        let (wlo, whi) = self.valid(2, k);
                        let wshift = (k * self.p.dilation[2]) as isize - self.p.padding[2] as isize;
                        let dst = &mut cols[row * width..(row + 1) * width];
                        dst.fill(0.0);
                        for od in d0.max(dlo)..d1.min(dhi) {
                            let id = (od * s[0]) as isize + dshift;
                            for oh_ in hlo..hhi {
                                let ih_ = (oh_ * s[1]) as isize + hshift;
                                let src_base = id as usize * in_plane + ih_ as usize * iw;
                                let dst_base = ((od - d0) * oh + oh_) * ow;
                                if wlo >= whi {
                                    continue;
                                } else if s[2] == 1 {
                                    let iw0 = (wlo as isize + wshift) as usize;
                                    dst[dst_base + wlo..dst_base + whi]
                                        .copy_from_slice(&xc[src_base + iw0..src_base + iw0 + (whi - wlo)]);
                                } else {
                                    for ow_ in wlo..whi {
                                        let iw_ = ((ow_ * s[2]) as isize + wshift) as usize;
                                        dst[dst_base + ow_] = xc[src_base + iw_];
                                    }
                                }
                            }
                        }
                        row += 1;
                    }
                }
            }
        }
    }

    /// Stride-1 only. Calls `f(row, x_offset, y_offset, len)` for every
    /// contiguous width run in which im2col row `row` reads input elements
    /// `x_offset..x_offset+len` for output elements `y_offset..y_offset+len`.
    fn for_each_run(&self, mut f: impl FnMut(usize, usize, usize, usize)) {
        let [kd, kh, kw] = self.p.kernel;
        let [_, ih, iw] = self.input;
        let [_, oh, ow] = self.output;
        let in_vol = self.input[0] * ih * iw;
        let shift = |axis: usize, k: usize| (k * self.p.dilation[axis]) as isize - self.p.padding[axis] as isize;
        let mut row = 0;
        for c in 0..self.p.in_channels {
            for a in 0..kd {
                let (dlo, dhi) = self.valid(0, a);
                for b in 0..kh {
                    let (hlo, hhi) = self.valid(1, b);
                    for k in 0..kw {
                        let (wlo, whi) = self.valid(2, k);
                        if wlo < whi {
                            for od in dlo..dhi {
                                let id = (od as isize + shift(0, a)) as usize;
                                for oh_ in hlo..hhi {
                                    let ih_ = (oh_ as isize + shift(1, b)) as usize;
                                    let x_off = c * in_vol + (id * ih + ih_) * iw + (wlo as isize + shift(2, k)) as usize;
                                    f(row, x_off, (od * oh + oh_) * ow + wlo, whi - wlo);
                                }
                            }
                        }
                        row += 1;
                    }
                }
            }
        }
    }

    /// Scatter-adds `cols` back into the input-shaped gradient `dx`.
    fn col2im(&self, cols: &[f64], d0: usize, d1: usize, dx: &mut [f64]) {
        let [kd, kh, kw] = self.p.kernel;
        let [_, ih, iw] = self.input;
        let [_, oh, ow] = self.output;
        let width = (d1 - d0) * oh * ow;
        let in_plane = ih * iw;
        let in_vol = self.input[0] * in_plane;
        let s = self.p.stride;
        let mut row = 0;
        for c in 0..self.p.in_channels {
            let xc = &mut dx[c * in_vol..(c + 1) * in_vol];
            for a in 0..kd {
                let (dlo, dhi) = self.valid(0, a);
                let dshift = (a * self.p.dilation[0]) as isize - self.p.padding[0] as isize;
                for b in 0..kh {
                    let (hlo, hhi) = self.valid(1, b);
                    let hshift = (b * self.p.dilation[1]) as isize - self.p.padding[1] as isize;
                    for k in 0..kw {
                        let (wlo, whi) = self.valid(2, k);
                        let wshift = (k * self.p.dilation[2]) as isize - self.p.padding[2] as isize;
                        let src = &cols[row * width..(row + 1) * width];
                        for od in d0.max(dlo)..d1.min(dhi) {
                            let id = (od * s[0]) as isize + dshift;
                            for oh_ in hlo..hhi {
                                let ih_ = (oh_ * s[1]) as isize + hshift;
                                let dst_base = id as usize * in_plane + ih_ as usize * iw;
                                let src_base = ((od - d0) * oh + oh_) * ow;
                                for ow_ in wlo..whi {
                                    let iw_ = ((ow_ * s[2]) as isize + wshift) as usize;
                                    xc[dst_base + iw_] += src[src_base + ow_];
                                }
                            }
                        }
                        row += 1;
                    }
                }
            }
        }
    }
}

/// 3D cross-correlation with dilation, padding and stride.
///
/// `input` is `[C_in,D,H,W]` or `[N,C_in,D,H,W]`; `weights` is
/// `[C_out,C_in,kd,kh,kw]`; `bias`, when given, is `[C_out]`.
pub fn conv3d(input: &Tensor, weights: &Tensor, bias: Option<&Tensor>, params: &ConvParams) -> Result<Tensor> {
    params.validate()?;
    let (n, c_in, sp) = spatial_dims(input.shape())?;
    if c_in != params.in_channels {
        return Err(TensorError::AxisMismatch {
            name: "input channels",
            axis: input.rank() - 4,
            expected: params.in_channels,
            actual: c_in,
        });
    }
    let ws = params.weight_shape();
    if weights.shape() != ws {
        let axis = (0..5).find(|&a| weights.shape().get(a) != Some(&ws[a])).unwrap_or(0);
        return Err(TensorError::AxisMismatch {
            name: "conv weights",
            axis,
            expected: ws[axis],
            actual: weights.shape().get(axis).copied().unwrap_or(0),
        });
    }
    if let Some(b) = bias {
        if b.shape() != [params.out_channels] {
            return Err(TensorError::AxisMismatch {
                name: "conv bias",
                axis: 0,
                expected: params.out_channels,
                actual: b.shape()[0],
            });
        }
    }
    let geo = Geometry { p: *params, input: sp, output: params.output_extents(sp)? };
    let c_out = params.out_channels;
    let p_out: usize = geo.output.iter().product();
    let in_vol: usize = sp.iter().product::<usize>() * c_in;
    let rows = geo.rows();

    let mut out = vec![0.0; n * c_out * p_out];
    {
        let xv = input.data();
        let wv = weights.data();
        let mut cols = Vec::new();
        for s in 0..n {
            let x = &xv[s * in_vol..(s + 1) * in_vol];
            let o = &mut out[s * c_out * p_out..(s + 1) * c_out * p_out];
            if params.is_pointwise() {
                gemm_ld(MatRef::new(&wv, c_out, rows), MatRef::new(x, rows, p_out), o, p_out, 0.0);
            } else if params.is_direct() {
                for co in 0..c_out {
                    let (w, y) = (&wv[co * rows..(co + 1) * rows], &mut o[co * p_out..(co + 1) * p_out]);
                    geo.for_each_run(|row, xo, yo, len| {
                        let wr = w[row];
                        y[yo..yo + len].iter_mut().zip(&x[xo..xo + len]).for_each(|(y, x)| *y += wr * x);
                    });
                }
            } else {
                let step = geo.planes_per_chunk();
                let mut d0 = 0;
                while d0 < geo.output[0] {
                    let d1 = (d0 + step).min(geo.output[0]);
                    let width = (d1 - d0) * geo.plane();
                    cols.resize(rows * width, 0.0);
                    geo.im2col(x, d0, d1, &mut cols);
                    gemm_ld(MatRef::new(&wv, c_out, rows), MatRef::new(&cols, rows, width), &mut o[d0 * geo.plane()..], p_out, 0.0);
                    d0 = d1;
                }
            }
            if let Some(b) = bias {
                let bv = b.data();
                for (co, chunk) in o.chunks_mut(p_out).enumerate() {
                    chunk.iter_mut().for_each(|v| *v += bv[co]);
                }
            }
        }
    }

    let out_shape = spatial_shape(input.shape(), n, c_out, geo.output);
    let mut inputs = vec![input.clone(), weights.clone()];
    if let Some(b) = bias {
        inputs.push(b.clone());
    }
    let need = (input.is_requires_grad(), weights.is_requires_grad(), bias.map(|b| b.is_requires_grad()));
    let (xs, wsaved) = (input.clone(), weights.clone());
    let backward = Box::new(move |g: &[f64]| {
        let xv = xs.data();
        let wv = wsaved.data();
        let mut gx = need.0.then(|| vec![0.0; n * in_vol]);
        let mut gw = need.1.then(|| vec![0.0; wv.len()]);
        let gb = need.2.and_then(|r| {
            r.then(|| {
                let mut gb = vec![0.0; c_out];
                for s in 0..n {
                    for (co, acc) in gb.iter_mut().enumerate() {
                        let off = (s * c_out + co) * p_out;
                        *acc += g[off..off + p_out].iter().sum::<f64>();
                    }
                }
                gb
            })
        });
        let mut cols = Vec::new();
        let mut dcols = Vec::new();
        for s in 0..n {
            let x = &xv[s * in_vol..(s + 1) * in_vol];
            let gs = &g[s * c_out * p_out..(s + 1) * c_out * p_out];
            if geo.p.is_pointwise() {
                if let Some(gw) = gw.as_mut() {
                    gemm_ld(MatRef::new(gs, c_out, p_out), MatRef::t(x, rows, p_out), gw, rows, 1.0);
                }
                if let Some(gx) = gx.as_mut() {
                    let dst = &mut gx[s * in_vol..(s + 1) * in_vol];
                    gemm_ld(MatRef::t(&wv, c_out, rows), MatRef::new(gs, c_out, p_out), dst, p_out, 1.0);
                }
                continue;
            }
            if geo.p.is_direct() {
                for co in 0..c_out {
                    let w = &wv[co * rows..(co + 1) * rows];
                    let gc = &gs[co * p_out..(co + 1) * p_out];
                    if let Some(gw) = gw.as_mut() {
                        let gw = &mut gw[co * rows..(co + 1) * rows];
                        geo.for_each_run(|row, xo, yo, len| {
                            gw[row] += gc[yo..yo + len].iter().zip(&x[xo..xo + len]).map(|(g, x)| g * x).sum::<f64>();
                        });
                    }
                    if let Some(gx) = gx.as_mut() {
                        let dst = &mut gx[s * in_vol..(s + 1) * in_vol];
                        geo.for_each_run(|row, xo, yo, len| {
                            let wr = w[row];
                            dst[xo..xo + len].iter_mut().zip(&gc[yo..yo + len]).for_each(|(d, g)| *d += wr * g);
                        });
                    }
                }
                continue;
            }
            let step = geo.planes_per_chunk();
            let mut d0 = 0;
            while d0 < geo.output[0] {
                let d1 = (d0 + step).min(geo.output[0]);
                let width = (d1 - d0) * geo.plane();
                let g_chunk = MatRef::new(&gs[d0 * geo.plane()..], c_out, width).with_ld(p_out);
                if let Some(gw) = gw.as_mut() {
                    cols.resize(rows * width, 0.0);
                    geo.im2col(x, d0, d1, &mut cols);
                    // dW += G * cols^T
                    gemm_ld(g_chunk, MatRef::t(&cols, rows, width), gw, rows, 1.0);
                }
                if let Some(gx) = gx.as_mut() {
                    dcols.resize(rows * width, 0.0);
                    // dcols = W^T * G
                    gemm_ld(MatRef::t(&wv, c_out, rows), g_chunk, &mut dcols, width, 0.0);
                    geo.col2im(&dcols, d0, d1, &mut gx[s * in_vol..(s + 1) * in_vol]);
                }
                d0 = d1;
            }
        }
        let mut grads = vec![gx, gw];
        if need.2.is_some() {
            grads.push(gb);
        }
        grads
    });
    Ok(Tensor::from_op(out_shape, out, "conv3d", inputs, backward))
}
