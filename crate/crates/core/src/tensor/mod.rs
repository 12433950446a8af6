//! Minimal N-dimensional tensor engine with tape-free reverse-mode autodiff.
//!
//! Every tensor produced by an operation on a tensor that requires gradients
//! keeps a [`Node`] pointing at its inputs and a closure computing the
//! vector-Jacobian product. [`Tensor::backward`] walks that graph once in
//! reverse topological order.
//!
//! Layout is channels-first row-major. Spatial operations accept either a
//! per-sample `[C, D, H, W]` tensor or a batched `[N, C, D, H, W]` tensor and
//! return the same rank they were given.

mod activation;
mod conv;
mod elementwise;
mod error;
mod grad_check;
mod init;
mod linalg;
mod norm;
mod pool;
mod reduce;
mod serialize;
mod shape_ops;
mod upsample;

pub use conv::{conv3d, ConvParams};
pub use error::TensorError;
pub use grad_check::{check_leaf, grad_check, grad_check_masked, relative_error, GradCheckReport};
pub use init::{he_uniform, seeded_rng};
pub use linalg::{matmul, transpose_last};
pub use norm::{batch_norm, BatchNormMode, RunningStats, BN_EPSILON, BN_MOMENTUM};
pub use pool::{global_pool_channelwise, pool3d, spatial_pool_across_channels, PoolKind};
pub use serialize::{read_tensor, write_tensor, TENSOR_MAGIC};
pub use shape_ops::{concat, narrow, split};
pub use upsample::upsample_trilinear2x;

use std::cell::{Cell, Ref, RefCell, RefMut};
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

pub type Result<T> = std::result::Result<T, TensorError>;

thread_local! {
    static NEXT_ID: Cell<usize> = const { Cell::new(1) };
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

fn next_id() -> usize {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Runs `f` without recording any graph nodes.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let _restore = Restore(GRAD_ENABLED.with(|g| g.replace(false)));
    f()
}

pub fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// Vector-Jacobian product: maps the output gradient to one optional gradient
/// per input (`None` when that input does not require gradients).
pub(crate) type BackwardFn = Box<dyn Fn(&[f64]) -> Vec<Option<Vec<f64>>>>;

pub(crate) struct Node {
    op: &'static str,
    inputs: Vec<Tensor>,
    backward: BackwardFn,
}

struct TensorInner {
    id: usize,
    shape: Vec<usize>,
    data: RefCell<Vec<f64>>,
    grad: RefCell<Option<Vec<f64>>>,
    requires_grad: bool,
    node: RefCell<Option<Node>>,
    released: Cell<bool>,
}

/// Reference-counted handle to a tensor. Cloning is cheap and shares storage.
#[derive(Clone)]
pub struct Tensor(Rc<TensorInner>);

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = self.0.node.borrow().as_ref().map(|n| n.op);
        f.debug_struct("Tensor")
            .field("id", &self.0.id)
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .field("op", &op)
            .finish()
    }
}

/// Outcome of one backward traversal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackwardReport {
    /// Number of graph nodes whose backward closure ran.
    pub nodes_executed: usize,
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    fn build(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, node: Option<Node>) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor(Rc::new(TensorInner {
            id: next_id(),
            shape,
            data: RefCell::new(data),
            grad: RefCell::new(None),
            requires_grad,
            node: RefCell::new(node),
            released: Cell::new(false),
        }))
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&e| e == 0) {
            return Err(TensorError::InvalidShape(shape.to_vec()));
        }
        if numel(shape) != data.len() {
            return Err(TensorError::LengthMismatch { shape: shape.to_vec(), len: data.len() });
        }
        Ok(Self::build(shape.to_vec(), data, false, None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        assert!(!shape.is_empty() && shape.iter().all(|&e| e > 0), "invalid shape {shape:?}");
        Self::build(shape.to_vec(), vec![value; numel(shape)], false, None)
    }

    pub fn scalar(value: f64) -> Self {
        Self::build(vec![1], vec![value], false, None)
    }

    /// Marks a leaf tensor as trainable. Returns a new leaf sharing no graph.
    pub fn requires_grad(self) -> Self {
        let data = self.0.data.borrow().clone();
        Self::build(self.0.shape.clone(), data, true, None)
    }

    /// A new leaf holding a copy of this tensor's values, cut from the graph.
    pub fn detach(&self) -> Self {
        Self::build(self.0.shape.clone(), self.0.data.borrow().clone(), false, None)
    }

    pub fn id(&self) -> usize {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        numel(&self.0.shape)
    }

    pub fn is_requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.node.borrow().is_none()
    }

    pub fn data(&self) -> Ref<'_, Vec<f64>> {
        self.0.data.borrow()
    }

    /// Mutable access to the values; intended for leaves (optimizer updates,
    /// finite-difference probes).
    pub fn data_mut(&self) -> RefMut<'_, Vec<f64>> {
        self.0.data.borrow_mut()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.data.borrow().clone()
    }

    pub fn item(&self) -> f64 {
        self.0.data.borrow()[0]
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.borrow().clone()
    }

    pub fn grad_ref(&self) -> Ref<'_, Option<Vec<f64>>> {
        self.0.grad.borrow()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    pub fn set_grad(&self, grad: Option<Vec<f64>>) {
        *self.0.grad.borrow_mut() = grad;
    }

    /// Same values under a new shape with equal element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if shape.is_empty() || numel(shape) != self.numel() {
            return Err(TensorError::ReshapeMismatch { from: self.shape().to_vec(), to: shape.to_vec() });
        }
        let data = self.to_vec();
        Ok(Tensor::from_op(shape.to_vec(), data, "reshape", vec![self.clone()], Box::new(|g| vec![Some(g.to_vec())])))
    }

    /// Creates the output of an operation, recording a graph node when
    /// gradients are enabled and any input requires them.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<f64>,
        op: &'static str,
        inputs: Vec<Tensor>,
        backward: BackwardFn,
    ) -> Tensor {
        let track = grad_enabled() && inputs.iter().any(|t| t.0.requires_grad);
        if track {
            Self::build(shape, data, true, Some(Node { op, inputs, backward }))
        } else {
            Self::build(shape, data, false, None)
        }
    }

    /// Back-propagates from a scalar, releasing the graph afterwards.
    pub fn backward(&self) -> Result<BackwardReport> {
        self.run_backward(false)
    }

    /// Back-propagates from a scalar and keeps the graph for another pass.
    pub fn backward_retain(&self) -> Result<BackwardReport> {
        self.run_backward(true)
    }

    fn run_backward(&self, retain: bool) -> Result<BackwardReport> {
        if self.numel() != 1 {
            return Err(TensorError::NonScalarLoss(self.shape().to_vec()));
        }
        if self.0.released.get() {
            return Err(TensorError::GraphReleased);
        }
        if !self.0.requires_grad {
            return Err(TensorError::NoGraph);
        }
        if self.is_leaf() {
            accumulate(&self.0.grad, &[1.0]);
            return Ok(BackwardReport { nodes_executed: 0 });
        }

        let order = self.topo_order()?;
        let mut pending: HashMap<usize, Vec<f64>> = HashMap::new();
        pending.insert(self.0.id, vec![1.0]);
        let mut executed = 0;
        for t in order.iter().rev() {
            let Some(grad_out) = pending.remove(&t.0.id) else {
                continue;
            };
            let node_ref = t.0.node.borrow();
            let node = node_ref.as_ref().expect("topological order holds only interior nodes");
            let grads = (node.backward)(&grad_out);
            executed += 1;
            debug_assert_eq!(grads.len(), node.inputs.len());
            for (input, g) in node.inputs.iter().zip(grads) {
                let Some(g) = g else { continue };
                if !input.0.requires_grad {
                    continue;
                }
                debug_assert_eq!(g.len(), input.numel(), "gradient size for op {}", node.op);
                if input.is_leaf() {
                    accumulate(&input.0.grad, &g);
                } else {
                    match pending.get_mut(&input.0.id) {
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                        None => {
                            pending.insert(input.0.id, g);
                        }
                    }
                }
            }
            drop(node_ref);
            if !retain {
                *t.0.node.borrow_mut() = None;
                t.0.released.set(true);
            }
        }
        Ok(BackwardReport { nodes_executed: executed })
    }

    /// Interior nodes reachable from `self`, inputs before outputs.
    fn topo_order(&self) -> Result<Vec<Tensor>> {
        let mut order = Vec::new();
        let mut visited = std::collections::HashSet::new();
        // (tensor, children expanded)
        let mut stack = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(t.0.id) {
                continue;
            }
            if t.0.released.get() {
                return Err(TensorError::GraphReleased);
            }
            let node = t.0.node.borrow();
            let Some(node) = node.as_ref() else { continue };
            stack.push((t.clone(), true));
            for input in &node.inputs {
                if input.0.requires_grad && !visited.contains(&input.0.id) {
                    stack.push((input.clone(), false));
                }
            }
        }
        Ok(order)
    }

    /// Number of interior graph nodes reachable from this tensor.
    pub fn graph_size(&self) -> usize {
        self.topo_order().map(|o| o.len()).unwrap_or(0)
    }
}

fn accumulate(slot: &RefCell<Option<Vec<f64>>>, g: &[f64]) {
    let mut slot = slot.borrow_mut();
    match slot.as_mut() {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        None => *slot = Some(g.to_vec()),
    }
}

/// Splits a spatial tensor shape into `(batch, channels, [d, h, w])`.
pub(crate) fn spatial_dims(shape: &[usize]) -> Result<(usize, usize, [usize; 3])> {
    match *shape {
        [c, d, h, w] => Ok((1, c, [d, h, w])),
        [n, c, d, h, w] => Ok((n, c, [d, h, w])),
        _ => Err(TensorError::ExpectedSpatial(shape.to_vec())),
    }
}

/// Rebuilds a spatial shape with the same rank as `like`.
pub(crate) fn spatial_shape(like: &[usize], n: usize, c: usize, sp: [usize; 3]) -> Vec<usize> {
    if like.len() == 4 {
        vec![c, sp[0], sp[1], sp[2]]
    } else {
        vec![n, c, sp[0], sp[1], sp[2]]
    }
}

pub use activation::{relu, sigmoid, softmax};
pub use elementwise::{add, add_scalar, mul, scale, sub};
pub use reduce::{mean, sum};

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let x = Tensor::from_vec(&[2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, 4.0]).unwrap().requires_grad();
        sum(&x).backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 6]);
    }

    #[test]
    fn square_gradient_is_twice_input() {
        let vals = vec![1.0, -2.0, 3.0, 0.5];
        let x = Tensor::from_vec(&[4], vals.clone()).unwrap().requires_grad();
        sum(&mul(&x, &x).unwrap()).backward().unwrap();
        let expect: Vec<f64> = vals.iter().map(|v| 2.0 * v).collect();
        assert_eq!(x.grad().unwrap(), expect);
    }

    #[test]
    fn non_scalar_backward_rejected() {
        let x = Tensor::ones(&[3]).requires_grad();
        let y = scale(&x, 2.0);
        assert!(matches!(y.backward(), Err(TensorError::NonScalarLoss(_))));
    }

    #[test]
    fn second_backward_without_retain_fails() {
        let x = Tensor::ones(&[3]).requires_grad();
        let loss = sum(&scale(&x, 2.0));
        loss.backward().unwrap();
        assert!(matches!(loss.backward(), Err(TensorError::GraphReleased)));
    }

    #[test]
    fn retained_graph_accumulates() {
        let x = Tensor::ones(&[2]).requires_grad();
        let loss = sum(&scale(&x, 3.0));
        loss.backward_retain().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![6.0, 6.0]);
    }

    #[test]
    fn each_node_runs_once() {
        // diamond: y = x*2, z = y + y, w = sigmoid(z), loss = sum(w * y)
        let x = Tensor::from_vec(&[3], vec![0.1, 0.2, 0.3]).unwrap().requires_grad();
        let y = scale(&x, 2.0);
        let z = add(&y, &y).unwrap();
        let w = sigmoid(&z);
        let loss = sum(&mul(&w, &y).unwrap());
        let nodes = loss.graph_size();
        assert_eq!(nodes, 5);
        let report = loss.backward().unwrap();
        assert_eq!(report.nodes_executed, nodes);
    }

    #[test]
    fn no_grad_records_nothing() {
        let x = Tensor::ones(&[2]).requires_grad();
        let y = no_grad(|| scale(&x, 2.0));
        assert!(y.is_leaf());
        assert!(!y.is_requires_grad());
        assert!(grad_enabled());
    }

    #[test]
    fn reshape_checks_count() {
        let x = Tensor::zeros(&[2, 3]);
        assert!(x.reshape(&[3, 2]).is_ok());
        assert!(matches!(x.reshape(&[4]), Err(TensorError::ReshapeMismatch { .. })));
    }
}
