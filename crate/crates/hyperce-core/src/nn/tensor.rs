//! Dense tensors and the scalar abstraction of the network engine.
//!
//! The production network runs in 32-bit floats; gradient checking can run
//! the identical code in 64-bit to separate algorithmic errors from rounding.
//! [`Scalar`] is the small trait that makes this switch possible.

use num_traits::{Float, FromPrimitive};

use crate::{Error, Result};

/// Floating-point type the engine is generic over.
///
/// Implemented for `f32` (the production precision) and `f64` (the
/// verification precision used by gradient checking).
pub trait Scalar: Float + FromPrimitive + std::fmt::Debug + Send + Sync + 'static {
    /// Central-difference step used by gradient checking at this precision.
    const GRAD_CHECK_STEP: f64;
}

impl Scalar for f32 {
    const GRAD_CHECK_STEP: f64 = 1e-3;
}

impl Scalar for f64 {
    const GRAD_CHECK_STEP: f64 = 1e-6;
}

/// Convert an `f64` literal to the engine scalar type.
#[inline]
pub(crate) fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in the scalar type")
}

/// A dense tensor: shape, row-major data, and optional gradient storage.
///
/// The canonical 4-D layout is batch × channels × height × width; vectors
/// and matrices use their natural flat layouts. `data.len()` always equals
/// the product of `shape`, and the gradient, when present, has the same
/// length.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T: Scalar = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
    grad: Option<Vec<T>>,
    requires_grad: bool,
}

impl<T: Scalar> Tensor<T> {
    /// Create a tensor from a shape and row-major data.
    ///
    /// # Errors
    ///
    /// Returns [`Error::ShapeMismatch`] if `data.len()` differs from the
    /// shape product, and [`Error::InvalidConfig`] for an empty shape or a
    /// zero dimension.
    pub fn from_vec(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidConfig(format!(
                "tensor shape must be non-empty with positive dims, got {shape:?}"
            )));
        }
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape,
            data,
            grad: None,
            requires_grad: false,
        })
    }

    /// An all-zero tensor of the given shape.
    ///
    /// # Panics
    ///
    /// Panics on an invalid shape (empty or containing zero).
    pub fn zeros(shape: Vec<usize>) -> Self {
        let len: usize = shape.iter().product();
        Self::from_vec(shape, vec![T::zero(); len]).expect("zeros shape is valid")
    }

    /// A single-element tensor holding `v` (shape `[1]`).
    pub fn scalar(v: T) -> Self {
        Self::from_vec(vec![1], vec![v]).expect("scalar shape is valid")
    }

    /// Mark the tensor as a differentiation target (builder style).
    pub fn with_requires_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    /// The shape.
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Total number of elements.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// Whether the tensor has zero elements (never true by construction).
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row-major data.
    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Mutable row-major data. Intended for building inputs and parameters
    /// before a tensor enters a graph; graph-held tensors are immutable.
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Accumulated gradient, if any.
    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    /// Whether gradients should be tracked through this tensor.
    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    /// Lazily allocate and return the gradient buffer.
    pub(crate) fn grad_mut_or_init(&mut self) -> &mut [T] {
        let len = self.data.len();
        self.grad.get_or_insert_with(|| vec![T::zero(); len])
    }

    /// Remove and return the gradient buffer.
    pub(crate) fn take_grad(&mut self) -> Option<Vec<T>> {
        self.grad.take()
    }

    /// Interpret the shape as batch × channels × height × width.
    ///
    /// # Errors
    ///
    /// Returns [`Error::ShapeMismatch`] unless the tensor is 4-D.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [b, c, h, w] => Ok((b, c, h, w)),
            _ => Err(Error::ShapeMismatch(format!(
                "expected a 4-D tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    /// Interpret the shape as rows × columns.
    ///
    /// # Errors
    ///
    /// Returns [`Error::ShapeMismatch`] unless the tensor is 2-D.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::ShapeMismatch(format!(
                "expected a 2-D tensor, got shape {:?}",
                self.shape
            ))),
        }
    }
}
