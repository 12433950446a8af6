use super::{Result, Tensor, TensorError};

/// Row-major operand view for [`gemm`]: `rows x cols` after optional
/// transpose, with leading dimension `ld` of the stored matrix.
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub ld: usize,
    pub transposed: bool,
}

impl<'a> MatRef<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        MatRef { data, rows, cols, ld: cols, transposed: false }
    }

    /// View of the stored `stored_rows x stored_cols` matrix as its transpose.
    pub fn t(data: &'a [f64], stored_rows: usize, stored_cols: usize) -> Self {
        MatRef { data, rows: stored_cols, cols: stored_rows, ld: stored_cols, transposed: true }
    }

    pub fn with_ld(mut self, ld: usize) -> Self {
        self.ld = ld;
        self
    }

    fn strides(&self) -> (isize, isize) {
        if self.transposed {
            (1, self.ld as isize)
        } else {
            (self.ld as isize, 1)
        }
    }

    fn span(&self) -> usize {
        let (outer, inner) = if self.transposed { (self.cols, self.rows) } else { (self.rows, self.cols) };
        if outer == 0 || inner == 0 {
            0
        } else {
            (outer - 1) * self.ld + inner
        }
    }
}

/// `c = a * b + beta * c`; `c` is row-major `a.rows x b.cols` with row stride `ldc`.
pub(crate) fn gemm_ld(a: MatRef<'_>, b: MatRef<'_>, c: &mut [f64], ldc: usize, beta: f64) {
    assert_eq!(a.cols, b.rows, "gemm inner extents");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert!(a.data.len() >= a.span() && b.data.len() >= b.span());
    if m == 0 || n == 0 {
        return;
    }
    assert!(ldc >= n && c.len() >= (m - 1) * ldc + n);
    if k == 0 {
        for i in 0..m {
            c[i * ldc..i * ldc + n].iter_mut().for_each(|v| *v *= beta);
        }
        return;
    }
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: extents and strides describe memory inside the asserted slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            ldc as isize,
            1,
        );
    }
}

/// `c = a * b + beta * c` with densely packed row-major `c`.
pub(crate) fn gemm(a: MatRef<'_>, b: MatRef<'_>, c: &mut [f64], beta: f64) {
    let n = b.cols;
    gemm_ld(a, b, c, n, beta)
}

/// Matrix product of `[M,K] x [K,N]`, or batched `[B,M,K] x [B,K,N]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (batch, m, k, n) = match (a.shape(), b.shape()) {
        (&[m, k], &[k2, n]) if k == k2 => (1, m, k, n),
        (&[ba, m, k], &[bb, k2, n]) if k == k2 && ba == bb => (ba, m, k, n),
        _ => return Err(TensorError::MatmulMismatch { left: a.shape().to_vec(), right: b.shape().to_vec() }),
    };
    let mut out = vec![0.0; batch * m * n];
    {
        let (av, bv) = (a.data(), b.data());
        for s in 0..batch {
            gemm(
                MatRef::new(&av[s * m * k..], m, k),
                MatRef::new(&bv[s * k * n..], k, n),
                &mut out[s * m * n..(s + 1) * m * n],
                0.0,
            );
        }
    }
    let mut shape = if a.rank() == 3 { vec![batch] } else { vec![] };
    shape.extend([m, n]);
    let (sa, sb) = (a.clone(), b.clone());
    let (ra, rb) = (a.is_requires_grad(), b.is_requires_grad());
    Ok(Tensor::from_op(
        shape,
        out,
        "matmul",
        vec![a.clone(), b.clone()],
        Box::new(move |g| {
            let ga = ra.then(|| {
                let bv = sb.data();
                let mut ga = vec![0.0; batch * m * k];
                for s in 0..batch {
                    // dA = G * B^T
                    gemm(
                        MatRef::new(&g[s * m * n..], m, n),
                        MatRef::t(&bv[s * k * n..], k, n),
                        &mut ga[s * m * k..(s + 1) * m * k],
                        0.0,
                    );
                }
                ga
            });
            let gb = rb.then(|| {
                let av = sa.data();
                let mut gb = vec![0.0; batch * k * n];
                for s in 0..batch {
                    // dB = A^T * G
                    gemm(
                        MatRef::t(&av[s * m * k..], m, k),
                        MatRef::new(&g[s * m * n..], m, n),
                        &mut gb[s * k * n..(s + 1) * k * n],
                        0.0,
                    );
                }
                gb
            });
            vec![ga, gb]
        }),
    ))
}

/// Swaps the last two axes of a rank-2 or rank-3 tensor.
pub fn transpose_last(x: &Tensor) -> Result<Tensor> {
    let (batch, r, c) = match *x.shape() {
        [r, c] => (1, r, c),
        [b, r, c] => (b, r, c),
        _ => return Err(TensorError::AxisOutOfRange { axis: 1, rank: x.rank() }),
    };
    let permute = move |src: &[f64], rows: usize, cols: usize| {
        let mut dst = vec![0.0; src.len()];
        for s in 0..batch {
            let off = s * rows * cols;
            for i in 0..rows {
                for j in 0..cols {
                    dst[off + j * rows + i] = src[off + i * cols + j];
                }
            }
        }
        dst
    };
    let out = permute(&x.data(), r, c);
    let mut shape = x.shape().to_vec();
    let rank = shape.len();
    shape.swap(rank - 2, rank - 1);
    Ok(Tensor::from_op(shape, out, "transpose", vec![x.clone()], Box::new(move |g| vec![Some(permute(g, c, r))])))
}
