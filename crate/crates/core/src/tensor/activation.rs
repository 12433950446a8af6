use super::{Result, Tensor, TensorError};

fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Logistic function. For finite inputs of large magnitude the result is
/// nudged inward so it stays strictly inside (0, 1).
pub fn sigmoid(x: &Tensor) -> Tensor {
    let out: Vec<f64> = x
        .data()
        .iter()
        .map(|&v| sigmoid_scalar(v).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
        .collect();
    let saved = out.clone();
    Tensor::from_op(
        x.shape().to_vec(),
        out,
        "sigmoid",
        vec![x.clone()],
        Box::new(move |g| vec![Some(g.iter().zip(&saved).map(|(g, s)| g * s * (1.0 - s)).collect())]),
    )
}

/// `max(0, x)`, with NaN passed through; the derivative at exactly zero is taken as 0.
pub fn relu(x: &Tensor) -> Tensor {
    let out: Vec<f64> = x.data().iter().map(|&v| if v < 0.0 { 0.0 } else { v }).collect();
    let src = x.clone();
    Tensor::from_op(
        x.shape().to_vec(),
        out,
        "relu",
        vec![x.clone()],
        Box::new(move |g| {
            let xv = src.data();
            vec![Some(g.iter().zip(xv.iter()).map(|(g, &v)| if v > 0.0 { *g } else { 0.0 }).collect())]
        }),
    )
}

/// Numerically stable softmax along `axis`.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    let shape = x.shape().to_vec();
    if axis >= shape.len() {
        return Err(TensorError::AxisOutOfRange { axis, rank: shape.len() });
    }
    let extent = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let xv = x.data();
    let mut out = vec![0.0; xv.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * extent * inner + i;
            let max = (0..extent).map(|k| xv[base + k * inner]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for k in 0..extent {
                let e = (xv[base + k * inner] - max).exp();
                out[base + k * inner] = e;
                total += e;
            }
            for k in 0..extent {
                out[base + k * inner] /= total;
            }
        }
    }
    drop(xv);
    let saved = out.clone();
    Ok(Tensor::from_op(
        shape,
        out,
        "softmax",
        vec![x.clone()],
        Box::new(move |g| {
            let mut gx = vec![0.0; g.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let base = o * extent * inner + i;
                    let dot: f64 = (0..extent).map(|k| g[base + k * inner] * saved[base + k * inner]).sum();
                    for k in 0..extent {
                        let j = base + k * inner;
                        gx[j] = saved[j] * (g[j] - dot);
                    }
                }
            }
            vec![Some(gx)]
        }),
    ))
}
