use super::Tensor;

/// Sum of all elements as a `[1]` tensor.
pub fn sum(x: &Tensor) -> Tensor {
    let total: f64 = x.data().iter().sum();
    let n = x.numel();
    Tensor::from_op(vec![1], vec![total], "sum", vec![x.clone()], Box::new(move |g| vec![Some(vec![g[0]; n])]))
}

/// Mean of all elements as a `[1]` tensor.
pub fn mean(x: &Tensor) -> Tensor {
    let n = x.numel();
    let total: f64 = x.data().iter().sum();
    Tensor::from_op(
        vec![1],
        vec![total / n as f64],
        "mean",
        vec![x.clone()],
        Box::new(move |g| vec![Some(vec![g[0] / n as f64; n])]),
    )
}
