use super::{spatial_dims, spatial_shape, Result, Tensor};

/// Two-tap interpolation weights for doubling an axis of length `n`.
///
/// Sample centres sit at cell midpoints (align-corners false): output index
/// `o` reads source coordinate `(o + 0.5) / 2 - 0.5`, clamped to `[0, n-1]`.
fn taps(n: usize) -> Vec<(usize, usize, f64, f64)> {
    (0..2 * n)
        .map(|o| {
            let src = ((o as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (n - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(n - 1);
            let w1 = src - i0 as f64;
            (i0, i1, 1.0 - w1, w1)
        })
        .collect()
}

/// Doubles the middle axis of a buffer viewed as `[outer, n, inner]`.
fn expand(src: &[f64], outer: usize, n: usize, inner: usize) -> Vec<f64> {
    let t = taps(n);
    let mut out = vec![0.0; outer * 2 * n * inner];
    for o in 0..outer {
        for (j, &(i0, i1, w0, w1)) in t.iter().enumerate() {
            let dst = &mut out[(o * 2 * n + j) * inner..(o * 2 * n + j + 1) * inner];
            let a = &src[(o * n + i0) * inner..(o * n + i0 + 1) * inner];
            let b = &src[(o * n + i1) * inner..(o * n + i1 + 1) * inner];
            for ((d, &x0), &x1) in dst.iter_mut().zip(a).zip(b) {
                *d = w0 * x0 + w1 * x1;
            }
        }
    }
    out
}

/// Adjoint of [`expand`].
fn contract(g: &[f64], outer: usize, n: usize, inner: usize) -> Vec<f64> {
    let t = taps(n);
    let mut out = vec![0.0; outer * n * inner];
    for o in 0..outer {
        for (j, &(i0, i1, w0, w1)) in t.iter().enumerate() {
            let gs = &g[(o * 2 * n + j) * inner..(o * 2 * n + j + 1) * inner];
            for (k, &gv) in gs.iter().enumerate() {
                out[(o * n + i0) * inner + k] += w0 * gv;
                out[(o * n + i1) * inner + k] += w1 * gv;
            }
        }
    }
    out
}

/// Trilinear upsampling by a factor of two on every spatial axis.
pub fn upsample_trilinear2x(input: &Tensor) -> Result<Tensor> {
    let (n, c, [d, h, w]) = spatial_dims(input.shape())?;
    let planes = n * c;
    // axis order: W, then H, then D
    let s1 = expand(&input.data(), planes * d * h, w, 1);
    let s2 = expand(&s1, planes * d, h, 2 * w);
    let out = expand(&s2, planes, d, 4 * h * w);
    let shape = spatial_shape(input.shape(), n, c, [2 * d, 2 * h, 2 * w]);
    Ok(Tensor::from_op(
        shape,
        out,
        "upsample_trilinear",
        vec![input.clone()],
        Box::new(move |g| {
            let g2 = contract(g, planes, d, 4 * h * w);
            let g1 = contract(&g2, planes * d, h, 2 * w);
            vec![Some(contract(&g1, planes * d * h, w, 1))]
        }),
    ))
}
