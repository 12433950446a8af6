use super::{Result, Tensor, TensorError};

/// Joins tensors along `axis`; every other extent must agree.
pub fn concat(inputs: &[Tensor], axis: usize) -> Result<Tensor> {
    let first = inputs.first().ok_or(TensorError::EmptyConcat)?;
    let rank = first.rank();
    if axis >= rank {
        return Err(TensorError::AxisOutOfRange { axis, rank });
    }
    for (index, t) in inputs.iter().enumerate().skip(1) {
        let compatible = t.rank() == rank && (0..rank).all(|a| a == axis || t.shape()[a] == first.shape()[a]);
        if !compatible {
            return Err(TensorError::ConcatMismatch {
                index,
                axis,
                expected: first.shape().to_vec(),
                actual: t.shape().to_vec(),
            });
        }
    }
    let outer: usize = first.shape()[..axis].iter().product();
    let inner: usize = first.shape()[axis + 1..].iter().product();
    let extents: Vec<usize> = inputs.iter().map(|t| t.shape()[axis]).collect();
    let total: usize = extents.iter().sum();
    let mut out = Vec::with_capacity(outer * total * inner);
    let datas: Vec<_> = inputs.iter().map(|t| t.data()).collect();
    for o in 0..outer {
        for (d, &e) in datas.iter().zip(&extents) {
            out.extend_from_slice(&d[o * e * inner..(o + 1) * e * inner]);
        }
    }
    drop(datas);
    let mut shape = first.shape().to_vec();
    shape[axis] = total;
    let needs: Vec<bool> = inputs.iter().map(|t| t.is_requires_grad()).collect();
    Ok(Tensor::from_op(
        shape,
        out,
        "concat",
        inputs.to_vec(),
        Box::new(move |g| {
            let mut grads: Vec<Vec<f64>> = extents.iter().map(|&e| Vec::with_capacity(outer * e * inner)).collect();
            let mut off = 0;
            for _ in 0..outer {
                for (gr, &e) in grads.iter_mut().zip(&extents) {
                    gr.extend_from_slice(&g[off..off + e * inner]);
                    off += e * inner;
                }
            }
            grads.into_iter().zip(&needs).map(|(gr, &need)| need.then_some(gr)).collect()
        }),
    ))
}

/// The sub-tensor `start..start+len` along `axis`.
pub fn narrow(x: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    let rank = x.rank();
    if axis >= rank {
        return Err(TensorError::AxisOutOfRange { axis, rank });
    }
    let extent = x.shape()[axis];
    if len == 0 || start + len > extent {
        return Err(TensorError::SliceOutOfRange { start, end: start + len, extent });
    }
    let outer: usize = x.shape()[..axis].iter().product();
    let inner: usize = x.shape()[axis + 1..].iter().product();
    let mut out = Vec::with_capacity(outer * len * inner);
    {
        let d = x.data();
        for o in 0..outer {
            let base = (o * extent + start) * inner;
            out.extend_from_slice(&d[base..base + len * inner]);
        }
    }
    let mut shape = x.shape().to_vec();
    shape[axis] = len;
    let total = x.numel();
    Ok(Tensor::from_op(
        shape,
        out,
        "narrow",
        vec![x.clone()],
        Box::new(move |g| {
            let mut gx = vec![0.0; total];
            for o in 0..outer {
                let base = (o * extent + start) * inner;
                gx[base..base + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(gx)]
        }),
    ))
}

/// Splits `axis` into `parts` equal pieces.
pub fn split(x: &Tensor, axis: usize, parts: usize) -> Result<Vec<Tensor>> {
    let rank = x.rank();
    if axis >= rank {
        return Err(TensorError::AxisOutOfRange { axis, rank });
    }
    let extent = x.shape()[axis];
    if parts == 0 || extent % parts != 0 {
        return Err(TensorError::AxisMismatch { name: "split extent divisible by parts", axis, expected: parts, actual: extent });
    }
    let len = extent / parts;
    (0..parts).map(|p| narrow(x, axis, p * len, len)).collect()
}
