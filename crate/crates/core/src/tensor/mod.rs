//! Dense tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is an immutable, reference-counted node. Operations on
//! tensors that require gradients record their inputs, forming a DAG that
//! [`grad`] and [`Tensor::backward`] walk in reverse topological order.
//! Every backward rule is itself written with differentiable primitives, so
//! gradients can be taken through gradients (needed by gradient penalties).

mod autograd;
mod conv;
mod element;
mod ops;

use std::cell::{Cell, RefCell};
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;
use rand_distr::StandardNormal;

pub use autograd::{grad, no_grad, second_order_grad_norm, NoGradGuard};
pub use ops::concat0;
pub use conv::{conv2d, conv2d_reference, conv_output_size};
pub use element::Element;

use ops::Op;

/// Errors raised by tensor construction and primitive operations.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch, expected {expected:?}, got {got:?}")]
    Shape {
        op: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("backward already ran on this graph; call reset_grad first")]
    AlreadyBackpropagated,
    #[error("tensor is not connected to the graph of the output")]
    NotOnGraph,
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

static NEXT_ID: AtomicUsize = AtomicUsize::new(0);

pub(crate) struct Node<T: Element> {
    id: usize,
    shape: Vec<usize>,
    data: Vec<T>,
    requires_grad: bool,
    op: Option<Op<T>>,
    grad: RefCell<Option<Vec<T>>>,
    consumed: Cell<bool>,
}

/// Reference-counted autodiff tensor. Cloning is cheap and shares the node.
pub struct Tensor<T: Element = f32>(Rc<Node<T>>);

impl<T: Element> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor(Rc::clone(&self.0))
    }
}

impl<T: Element> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<T> = self.0.data.iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .field("data", &preview)
            .finish()
    }
}

pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Element> Tensor<T> {
    fn from_node(shape: Vec<usize>, data: Vec<T>, requires_grad: bool, op: Option<Op<T>>) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor(Rc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data,
            requires_grad,
            op,
            grad: RefCell::new(None),
            consumed: Cell::new(false),
        }))
    }

    /// Constant tensor (no gradient tracking).
    pub fn from_vec(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        if shape.contains(&0) {
            return Err(TensorError::Invalid {
                op: "from_vec",
                msg: format!("extents must be positive, got {shape:?}"),
            });
        }
        if numel(shape) != data.len() {
            return Err(TensorError::Invalid {
                op: "from_vec",
                msg: format!("shape {shape:?} needs {} elements, got {}", numel(shape), data.len()),
            });
        }
        Ok(Self::from_node(shape.to_vec(), data, false, None))
    }

    /// Leaf tensor that participates in gradient computation.
    pub fn param(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        let t = Self::from_vec(data, shape)?;
        Ok(t.into_leaf(true))
    }

    pub fn scalar(v: T) -> Self {
        Self::from_node(Vec::new(), vec![v], false, None)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        Self::from_node(shape.to_vec(), vec![v; numel(shape)], false, None)
    }

    /// Standard-normal samples scaled by `std`.
    pub fn randn<R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Self {
        let data = (0..numel(shape))
            .map(|_| {
                let v: f64 = rng.sample(StandardNormal);
                T::c(v * std)
            })
            .collect();
        Self::from_node(shape.to_vec(), data, false, None)
    }

    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Self {
        let data = (0..numel(shape)).map(|_| T::c(rng.gen_range(lo..hi))).collect();
        Self::from_node(shape.to_vec(), data, false, None)
    }

    /// Same values, detached from any graph, with the given grad flag.
    pub fn into_leaf(self, requires_grad: bool) -> Self {
        Self::from_node(self.0.shape.clone(), self.0.data.clone(), requires_grad, None)
    }

    pub fn detach(&self) -> Self {
        self.clone().into_leaf(false)
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn ndim(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.0.data
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.0.data.clone()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.op.is_none()
    }

    /// Gradient populated by [`Tensor::backward`].
    pub fn grad(&self) -> Option<Vec<T>> {
        self.0.grad.borrow().clone()
    }

    /// Single element of a scalar (or one-element) tensor.
    pub fn item(&self) -> T {
        self.0.data[0]
    }

    pub fn id(&self) -> usize {
        self.0.id
    }

    pub(crate) fn node(&self) -> &Node<T> {
        &self.0
    }

    /// Converts element type; the result is a constant.
    pub fn cast<U: Element>(&self) -> Tensor<U> {
        let data = self.0.data.iter().map(|v| U::c(v.to_f64().unwrap_or(f64::NAN))).collect();
        Tensor::from_node(self.0.shape.clone(), data, false, None)
    }

    pub fn all_finite(&self) -> bool {
        self.0.data.iter().all(|v| v.is_finite())
    }
}
