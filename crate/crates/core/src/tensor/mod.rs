//! Dense tensors with a dynamic reverse-mode autograd graph.
//!
//! Every operator records a backward rule when at least one of its inputs
//! requires a gradient; otherwise nothing is retained and the result is a
//! plain immutable value. Image tensors use `C×H×W` layout with an optional
//! leading batch axis.

mod graph;
mod real;

pub mod conv;
pub mod elementwise;
pub mod haar;
pub mod norm;
pub mod reduce;
pub mod resample;
pub mod shape_ops;
pub mod shuffle;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

pub use conv::Conv2dArgs;
pub use haar::HaarBands;
pub use norm::RunningStats;
pub use real::{DType, Real};

pub(crate) use real::gemm;

use crate::error::{shape_err, Error, Result};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

pub(crate) type BackwardFn<T> = Box<dyn Fn(&[T], &[bool]) -> Vec<Option<Vec<T>>> + Send + Sync>;

pub(crate) struct GradFn<T: Real> {
    pub(crate) name: &'static str,
    pub(crate) inputs: Vec<Tensor<T>>,
    pub(crate) backward: BackwardFn<T>,
}

pub(crate) struct Node<T: Real> {
    pub(crate) id: u64,
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Arc<Vec<T>>,
    pub(crate) requires_grad: bool,
    pub(crate) grad: Mutex<Option<Vec<T>>>,
    pub(crate) grad_fn: Option<GradFn<T>>,
}

/// Reference-counted handle to a tensor node.
pub struct Tensor<T: Real = f32> {
    pub(crate) node: Arc<Node<T>>,
}

impl<T: Real> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor {
            node: Arc::clone(&self.node),
        }
    }
}

impl<T: Real> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.node.shape)
            .field("requires_grad", &self.node.requires_grad)
            .field("op", &self.node.grad_fn.as_ref().map(|g| g.name))
            .finish()
    }
}

fn check_shape(op: &'static str, shape: &[usize], len: usize) -> Result<()> {
    if shape.contains(&0) {
        return shape_err(op, format!("zero extent in shape {shape:?}"));
    }
    let numel: usize = shape.iter().product();
    if numel != len {
        return shape_err(
            op,
            format!("shape {shape:?} holds {numel} values, got {len}"),
        );
    }
    Ok(())
}

impl<T: Real> Tensor<T> {
    fn leaf(shape: Vec<usize>, data: Arc<Vec<T>>, requires_grad: bool) -> Self {
        Tensor {
            node: Arc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                requires_grad,
                grad: Mutex::new(None),
                grad_fn: None,
            }),
        }
    }

    /// Constant tensor (no gradient tracking).
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        check_shape("from_vec", shape, data.len())?;
        Ok(Self::leaf(shape.to_vec(), Arc::new(data), false))
    }

    /// Leaf tensor that accumulates a gradient during [`Tensor::backward`].
    pub fn param(shape: &[usize], data: Vec<T>) -> Result<Self> {
        check_shape("param", shape, data.len())?;
        Ok(Self::leaf(shape.to_vec(), Arc::new(data), true))
    }

    /// Leaf sharing an existing buffer without copying.
    pub fn from_shared(shape: &[usize], data: Arc<Vec<T>>, requires_grad: bool) -> Result<Self> {
        check_shape("from_shared", shape, data.len())?;
        Ok(Self::leaf(shape.to_vec(), data, requires_grad))
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::from_vec(shape, data.iter().map(|&v| T::lit(v)).collect())
    }

    pub fn full(shape: &[usize], value: T) -> Result<Self> {
        let n = shape.iter().product();
        Self::from_vec(shape, vec![value; n])
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Result<Self> {
        Self::full(shape, T::one())
    }

    pub fn scalar(value: T) -> Self {
        Self::leaf(vec![1], Arc::new(vec![value]), false)
    }

    /// Result of an operator. Records `backward` only if an input needs a
    /// gradient. Rejects non-finite outputs.
    pub(crate) fn from_op(
        name: &'static str,
        shape: Vec<usize>,
        data: Vec<T>,
        inputs: Vec<Tensor<T>>,
        backward: impl Fn(&[T], &[bool]) -> Vec<Option<Vec<T>>> + Send + Sync + 'static,
    ) -> Result<Self> {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len(), "{name}");
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(name.to_string()));
        }
        let requires_grad = inputs.iter().any(|t| t.requires_grad());
        let grad_fn = requires_grad.then(|| GradFn {
            name,
            inputs,
            backward: Box::new(backward),
        });
        Ok(Tensor {
            node: Arc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data: Arc::new(data),
                requires_grad,
                grad: Mutex::new(None),
                grad_fn,
            }),
        })
    }

    pub fn id(&self) -> u64 {
        self.node.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn rank(&self) -> usize {
        self.node.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.node.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.node.data
    }

    pub(crate) fn shared_data(&self) -> Arc<Vec<T>> {
        Arc::clone(&self.node.data)
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.node.data.to_vec()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.node.data.iter().map(|v| v.as_f64()).collect()
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    /// Name of the operator that produced this tensor, if tracked.
    pub fn op_name(&self) -> Option<&'static str> {
        self.node.grad_fn.as_ref().map(|g| g.name)
    }

    /// Accumulated gradient of a leaf, if any.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.node.grad.lock().expect("grad lock").clone()
    }

    pub fn zero_grad(&self) {
        *self.node.grad.lock().expect("grad lock") = None;
    }

    /// Same values, cut from the graph.
    pub fn detach(&self) -> Self {
        Self::leaf(self.node.shape.clone(), self.shared_data(), false)
    }

    /// Scalar value of a one-element tensor.
    pub fn item(&self) -> Result<T> {
        if self.numel() != 1 {
            return shape_err("item", format!("tensor has {} elements", self.numel()));
        }
        Ok(self.node.data[0])
    }

    pub fn all_finite(&self) -> bool {
        self.node.data.iter().all(|v| v.is_finite())
    }
}

/// Decomposed image layout: `N×C×H×W`, remembering whether the batch axis
/// was explicit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Nchw {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub batched: bool,
}

impl Nchw {
    pub(crate) fn of(op: &'static str, shape: &[usize]) -> Result<Self> {
        match *shape {
            [c, h, w] => Ok(Nchw {
                n: 1,
                c,
                h,
                w,
                batched: false,
            }),
            [n, c, h, w] => Ok(Nchw {
                n,
                c,
                h,
                w,
                batched: true,
            }),
            _ => shape_err(op, format!("expected C×H×W or N×C×H×W, got {shape:?}")),
        }
    }

    pub(crate) fn shape_with(&self, c: usize, h: usize, w: usize) -> Vec<usize> {
        if self.batched {
            vec![self.n, c, h, w]
        } else {
            vec![c, h, w]
        }
    }

    pub(crate) fn plane(&self) -> usize {
        self.h * self.w
    }
}

pub(crate) fn add_into<T: Real>(acc: &mut [T], src: &[T]) {
    acc.iter_mut().zip(src).for_each(|(a, &b)| *a += b);
}
