use super::{Result, Tensor, TensorError};

/// How the second operand maps onto the first.
enum Broadcast {
    Same,
    /// `b_index[i]` is the element of `b` paired with element `i` of `a`.
    Indexed(Vec<usize>),
}

/// Resolves how `b` broadcasts over `a`.
///
/// Rules: equal shapes; a rank-1 vector whose length matches the channel axis
/// of a spatial `a` (axis 0 of `[C,D,H,W]`, axis 1 of `[N,C,D,H,W]`); otherwise
/// right-aligned broadcasting where each axis of `b` is 1 or equal to `a`'s.
fn resolve(a: &[usize], b: &[usize]) -> Option<Broadcast> {
    if a == b {
        return Some(Broadcast::Same);
    }
    let aligned: Vec<usize> = if b.len() == 1 && (a.len() == 4 || a.len() == 5) && a[a.len() - 4] == b[0] {
        let mut s = vec![1; a.len()];
        s[a.len() - 4] = b[0];
        s
    } else {
        if b.len() > a.len() {
            return None;
        }
        let mut s = vec![1; a.len() - b.len()];
        s.extend_from_slice(b);
        s
    };
    if aligned.iter().zip(a).any(|(&bb, &aa)| bb != 1 && bb != aa) {
        return None;
    }
    let mut strides = vec![0usize; a.len()];
    let mut acc = 1;
    for ax in (0..a.len()).rev() {
        if aligned[ax] != 1 {
            strides[ax] = acc;
        }
        acc *= aligned[ax];
    }
    let n: usize = a.iter().product();
    let mut index = Vec::with_capacity(n);
    let mut counter = vec![0usize; a.len()];
    let mut offset = 0usize;
    for _ in 0..n {
        index.push(offset);
        for ax in (0..a.len()).rev() {
            counter[ax] += 1;
            offset += strides[ax];
            if counter[ax] < a[ax] {
                break;
            }
            offset -= strides[ax] * a[ax];
            counter[ax] = 0;
        }
    }
    Some(Broadcast::Indexed(index))
}

#[derive(Clone, Copy)]
enum Kind {
    Add,
    Sub,
    Mul,
}

fn binary(a: &Tensor, b: &Tensor, kind: Kind) -> Result<Tensor> {
    let (a, b) = match resolve(a.shape(), b.shape()) {
        Some(_) => (a, b),
        None if !matches!(kind, Kind::Sub) && resolve(b.shape(), a.shape()).is_some() => (b, a),
        None => return Err(TensorError::Broadcast { a: a.shape().to_vec(), b: b.shape().to_vec() }),
    };
    let plan = resolve(a.shape(), b.shape()).expect("checked above");
    let av = a.data();
    let bv = b.data();
    let f = |x: f64, y: f64| match kind {
        Kind::Add => x + y,
        Kind::Sub => x - y,
        Kind::Mul => x * y,
    };
    let out: Vec<f64> = match &plan {
        Broadcast::Same => av.iter().zip(bv.iter()).map(|(&x, &y)| f(x, y)).collect(),
        Broadcast::Indexed(idx) => av.iter().zip(idx).map(|(&x, &j)| f(x, bv[j])).collect(),
    };
    drop((av, bv));
    let b_len = b.numel();
    let (ra, rb) = (a.is_requires_grad(), b.is_requires_grad());
    let (sa, sb) = (a.clone(), b.clone());
    let name = match kind {
        Kind::Add => "add",
        Kind::Sub => "sub",
        Kind::Mul => "mul",
    };
    let backward = Box::new(move |g: &[f64]| {
        let ga = ra.then(|| match kind {
            Kind::Add | Kind::Sub => g.to_vec(),
            Kind::Mul => {
                let bv = sb.data();
                match &plan {
                    Broadcast::Same => g.iter().zip(bv.iter()).map(|(g, y)| g * y).collect(),
                    Broadcast::Indexed(idx) => g.iter().zip(idx).map(|(g, &j)| g * bv[j]).collect(),
                }
            }
        });
        let gb = rb.then(|| {
            let av = sa.data();
            let term = |i: usize| match kind {
                Kind::Add => g[i],
                Kind::Sub => -g[i],
                Kind::Mul => g[i] * av[i],
            };
            match &plan {
                Broadcast::Same => (0..g.len()).map(term).collect(),
                Broadcast::Indexed(idx) => {
                    let mut acc = vec![0.0; b_len];
                    for (i, &j) in idx.iter().enumerate() {
                        acc[j] += term(i);
                    }
                    acc
                }
            }
        });
        vec![ga, gb]
    });
    Ok(Tensor::from_op(a.shape().to_vec(), out, name, vec![a.clone(), b.clone()], backward))
}

/// Elementwise sum; `b` may broadcast over `a` (or `a` over `b`).
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    binary(a, b, Kind::Add)
}

/// Elementwise difference `a - b`; only `b` may broadcast.
pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    binary(a, b, Kind::Sub)
}

/// Elementwise product; `b` may broadcast over `a` (or `a` over `b`).
pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    binary(a, b, Kind::Mul)
}

pub fn scale(x: &Tensor, factor: f64) -> Tensor {
    let out = x.data().iter().map(|v| v * factor).collect();
    Tensor::from_op(
        x.shape().to_vec(),
        out,
        "scale",
        vec![x.clone()],
        Box::new(move |g| vec![Some(g.iter().map(|v| v * factor).collect())]),
    )
}

pub fn add_scalar(x: &Tensor, value: f64) -> Tensor {
    let out = x.data().iter().map(|v| v + value).collect();
    Tensor::from_op(x.shape().to_vec(), out, "add_scalar", vec![x.clone()], Box::new(|g| vec![Some(g.to_vec())]))
}
