use super::{spatial_dims, spatial_shape, Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Avg,
}

/// Windowed max or mean pooling over the spatial axes.
///
/// Max pooling routes the whole gradient of a window to the first maximal
/// element in scan order.
pub fn pool3d(input: &Tensor, kind: PoolKind, window: [usize; 3], stride: [usize; 3]) -> Result<Tensor> {
    let (n, c, sp) = spatial_dims(input.shape())?;
    if (0..3).any(|a| window[a] == 0 || window[a] > sp[a]) {
        return Err(TensorError::WindowTooLarge { window, extents: sp });
    }
    if stride.contains(&0) {
        return Err(TensorError::ConvParams("pool stride must be positive".into()));
    }
    let out_sp = [0, 1, 2].map(|a| (sp[a] - window[a]) / stride[a] + 1);
    let in_vol: usize = sp.iter().product();
    let out_vol: usize = out_sp.iter().product();
    let planes = n * c;
    let wcount = (window[0] * window[1] * window[2]) as f64;
    let mut out = vec![0.0; planes * out_vol];
    // source index per output element (max) - unused for avg
    let mut argmax = if kind == PoolKind::Max { vec![0usize; planes * out_vol] } else { Vec::new() };
    {
        let x = input.data();
        for pl in 0..planes {
            let xb = pl * in_vol;
            let mut o = pl * out_vol;
            for od in 0..out_sp[0] {
                for oh in 0..out_sp[1] {
                    for ow in 0..out_sp[2] {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_at = usize::MAX;
                        let mut total = 0.0;
                        for a in 0..window[0] {
                            for b in 0..window[1] {
                                let row = xb + ((od * stride[0] + a) * sp[1] + oh * stride[1] + b) * sp[2] + ow * stride[2];
                                for k in 0..window[2] {
                                    let v = x[row + k];
                                    total += v;
                                    if best_at == usize::MAX || v > best {
                                        best = v;
                                        best_at = row + k;
                                    }
                                }
                            }
                        }
                        match kind {
                            PoolKind::Max => {
                                out[o] = best;
                                argmax[o] = best_at;
                            }
                            PoolKind::Avg => out[o] = total / wcount,
                        }
                        o += 1;
                    }
                }
            }
        }
    }
    let total_in = planes * in_vol;
    let backward: super::BackwardFn = match kind {
        PoolKind::Max => Box::new(move |g| {
            let mut gx = vec![0.0; total_in];
            for (gi, &src) in g.iter().zip(&argmax) {
                gx[src] += gi;
            }
            vec![Some(gx)]
        }),
        PoolKind::Avg => Box::new(move |g| {
            let mut gx = vec![0.0; total_in];
            for pl in 0..planes {
                let mut o = pl * out_vol;
                for od in 0..out_sp[0] {
                    for oh in 0..out_sp[1] {
                        for ow in 0..out_sp[2] {
                            let share = g[o] / wcount;
                            for a in 0..window[0] {
                                for b in 0..window[1] {
                                    let row = pl * in_vol
                                        + ((od * stride[0] + a) * sp[1] + oh * stride[1] + b) * sp[2]
                                        + ow * stride[2];
                                    gx[row..row + window[2]].iter_mut().for_each(|v| *v += share);
                                }
                            }
                            o += 1;
                        }
                    }
                }
            }
            vec![Some(gx)]
        }),
    };
    let name = if kind == PoolKind::Max { "max_pool3d" } else { "avg_pool3d" };
    Ok(Tensor::from_op(spatial_shape(input.shape(), n, c, out_sp), out, name, vec![input.clone()], backward))
}

/// One value per channel: the max or mean over every spatial position.
/// `[C,D,H,W]` gives `[C]`; `[N,C,D,H,W]` gives `[N,C]`.
pub fn global_pool_channelwise(input: &Tensor, kind: PoolKind) -> Result<Tensor> {
    let (n, c, sp) = spatial_dims(input.shape())?;
    let vol: usize = sp.iter().product();
    let x = input.data();
    let mut out = Vec::with_capacity(n * c);
    let mut argmax = Vec::new();
    for plane in x.chunks(vol) {
        match kind {
            PoolKind::Avg => out.push(plane.iter().sum::<f64>() / vol as f64),
            PoolKind::Max => {
                let (idx, v) = plane.iter().enumerate().fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                    if v > bv {
                        (i, v)
                    } else {
                        (bi, bv)
                    }
                });
                out.push(v);
                argmax.push(idx);
            }
        }
    }
    drop(x);
    let shape = if input.rank() == 4 { vec![c] } else { vec![n, c] };
    let total = n * c * vol;
    let backward: super::BackwardFn = match kind {
        PoolKind::Avg => Box::new(move |g| {
            let mut gx = vec![0.0; total];
            for (p, chunk) in gx.chunks_mut(vol).enumerate() {
                chunk.fill(g[p] / vol as f64);
            }
            vec![Some(gx)]
        }),
        PoolKind::Max => Box::new(move |g| {
            let mut gx = vec![0.0; total];
            for (p, &i) in argmax.iter().enumerate() {
                gx[p * vol + i] = g[p];
            }
            vec![Some(gx)]
        }),
    };
    Ok(Tensor::from_op(shape, out, "global_pool", vec![input.clone()], backward))
}

/// Per-voxel max or mean across the channel axis, keeping a unit channel axis.
pub fn spatial_pool_across_channels(input: &Tensor, kind: PoolKind) -> Result<Tensor> {
    let (n, c, sp) = spatial_dims(input.shape())?;
    let vol: usize = sp.iter().product();
    let x = input.data();
    let mut out = vec![0.0; n * vol];
    let mut argmax = if kind == PoolKind::Max { vec![0usize; n * vol] } else { Vec::new() };
    for s in 0..n {
        let base = s * c * vol;
        for v in 0..vol {
            match kind {
                PoolKind::Avg => {
                    out[s * vol + v] = (0..c).map(|ch| x[base + ch * vol + v]).sum::<f64>() / c as f64;
                }
                PoolKind::Max => {
                    let mut best = x[base + v];
                    let mut at = 0;
                    for ch in 1..c {
                        let val = x[base + ch * vol + v];
                        if val > best {
                            best = val;
                            at = ch;
                        }
                    }
                    out[s * vol + v] = best;
                    argmax[s * vol + v] = at;
                }
            }
        }
    }
    drop(x);
    let backward: super::BackwardFn = Box::new(move |g| {
        let mut gx = vec![0.0; n * c * vol];
        for s in 0..n {
            let base = s * c * vol;
            for v in 0..vol {
                let gv = g[s * vol + v];
                match kind {
                    PoolKind::Avg => (0..c).for_each(|ch| gx[base + ch * vol + v] = gv / c as f64),
                    PoolKind::Max => gx[base + argmax[s * vol + v] * vol + v] = gv,
                }
            }
        }
        vec![Some(gx)]
    });
    Ok(Tensor::from_op(spatial_shape(input.shape(), n, 1, sp), out, "channel_pool", vec![input.clone()], backward))
}
