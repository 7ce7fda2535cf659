//! Dense 4-D arrays in `[batch, channel, height, width]` layout.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::TensorError;
use crate::scalar::Scalar;

/// Dimensions of a [`Tensor`]: batch, channels, height, width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub const fn scalar() -> Self {
        Shape::new(1, 1, 1, 1)
    }

    pub const fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn is_scalar(&self) -> bool {
        self.len() == 1
    }

    /// True when batch and spatial dimensions agree (channel counts may differ).
    pub fn same_spatial(&self, other: &Shape) -> bool {
        self.n == other.n && self.h == other.h && self.w == other.w
    }
}

impl core::fmt::Display for Shape {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.n, self.c, self.h, self.w)
    }
}

/// A dense `[N, C, H, W]` array of finite values.
///
/// A `Tensor` by itself is an immutable value; recorded computation happens
/// on a [`crate::tape::Tape`], which owns the tensors it produced and hands
/// out [`crate::tape::TensorId`] handles.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    shape: Shape,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    /// Builds a tensor, checking the element count and that every value is
    /// finite.
    pub fn new(shape: Shape, data: Vec<S>) -> Result<Self, TensorError> {
        if data.len() != shape.len() {
            return Err(TensorError::shape(format!(
                "tensor data length {} does not match shape {} ({} elements)",
                data.len(),
                shape,
                shape.len()
            )));
        }
        let t = Tensor { shape, data };
        t.check_finite("Tensor::new")?;
        Ok(t)
    }

    /// Builds a tensor without the finiteness scan. The caller vouches for
    /// the values (used internally where finiteness was just checked).
    pub(crate) fn from_parts(shape: Shape, data: Vec<S>) -> Self {
        debug_assert_eq!(data.len(), shape.len());
        Tensor { shape, data }
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![S::ZERO; shape.len()],
        }
    }

    pub fn full(shape: Shape, value: S) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn scalar(value: S) -> Self {
        Tensor {
            shape: Shape::scalar(),
            data: vec![value],
        }
    }

    /// Fills from a function of the `(n, c, h, w)` index.
    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for h in 0..shape.h {
                    for w in 0..shape.w {
                        data.push(f(n, c, h, w));
                    }
                }
            }
        }
        Tensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> S {
        self.data[((n * self.shape.c + c) * self.shape.h + h) * self.shape.w + w]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, h: usize, w: usize) -> &mut S {
        &mut self.data[((n * self.shape.c + c) * self.shape.h + h) * self.shape.w + w]
    }

    /// One `H×W` plane as a contiguous slice.
    #[inline]
    pub fn plane(&self, n: usize, c: usize) -> &[S] {
        let hw = self.shape.h * self.shape.w;
        let start = (n * self.shape.c + c) * hw;
        &self.data[start..start + hw]
    }

    #[inline]
    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [S] {
        let hw = self.shape.h * self.shape.w;
        let start = (n * self.shape.c + c) * hw;
        &mut self.data[start..start + hw]
    }

    /// Value of a 1-element tensor.
    pub fn scalar_value(&self) -> Result<S, TensorError> {
        if !self.shape.is_scalar() {
            return Err(TensorError::NotScalar {
                context: format!("expected scalar, got shape {}", self.shape),
            });
        }
        Ok(self.data[0])
    }

    pub fn check_finite(&self, context: &str) -> Result<(), TensorError> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(TensorError::non_finite(format!(
                "{context}: element {i} of tensor {}",
                self.shape
            ))),
        }
    }

    /// Maps every element through `f`, keeping the shape.
    pub fn map(&self, f: impl Fn(S) -> S) -> Tensor<S> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Converts element precision.
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| T::from_f64(v.to_f64())).collect(),
        }
    }
}
