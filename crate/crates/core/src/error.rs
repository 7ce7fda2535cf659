//! Error type shared by tensor, tape, and model code.

use alloc::string::String;
use core::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TensorError {
    /// Operand shapes are incompatible; the message names the offending
    /// dimension.
    ShapeMismatch { context: String },
    /// A NaN or infinity was produced (or supplied); the message names the
    /// operation that detected it.
    NonFinite { context: String },
    /// An operation that requires elements was given an empty tensor.
    Empty { context: String },
    /// `backward` was started from a node that is not a 1-element scalar.
    NotScalar { context: String },
    /// An argument was outside its documented domain.
    InvalidArgument { context: String },
}

impl TensorError {
    pub fn shape(context: impl Into<String>) -> Self {
        TensorError::ShapeMismatch {
            context: context.into(),
        }
    }
    pub fn non_finite(context: impl Into<String>) -> Self {
        TensorError::NonFinite {
            context: context.into(),
        }
    }
    pub fn invalid(context: impl Into<String>) -> Self {
        TensorError::InvalidArgument {
            context: context.into(),
        }
    }
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorError::ShapeMismatch { context } => write!(f, "shape mismatch: {context}"),
            TensorError::NonFinite { context } => write!(f, "non-finite value: {context}"),
            TensorError::Empty { context } => write!(f, "empty tensor: {context}"),
            TensorError::NotScalar { context } => write!(f, "not a scalar: {context}"),
            TensorError::InvalidArgument { context } => write!(f, "invalid argument: {context}"),
        }
    }
}

impl core::error::Error for TensorError {}
