//! Self-supervised depth estimation that learns on stereo pairs and infers
//! from a single image.
//!
//! The crate is organized around a small dense-tensor type with a recorded
//! computation graph ([`tape::Tape`]), differentiable image-domain primitives
//! (mirroring, scanline warping, Gaussian filtering, pyramid resampling), the
//! photometric/consistency/smoothness loss stack, a compact encoder-decoder
//! disparity network with a mirrored Siamese forward pass, an Adam training
//! loop, a procedural stereo-scene generator with exact ground truth, depth
//! metric suites, and mirror-blend post-processing.
//!
//! Everything here is pure computation over in-memory arrays; file formats
//! and the command-line surface live in the companion `smdepth` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod error;
pub mod image;
pub mod losses;
pub mod metrics;
pub mod network;
pub mod params;
pub mod postproc;
pub mod rng;
pub mod scalar;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod train;

mod conv;

#[cfg(any(test, feature = "testutil"))]
pub mod gradcheck;

pub use error::TensorError;
pub use scalar::Scalar;
pub use tape::{Gradients, Tape, TensorId};
pub use tensor::{Shape, Tensor};
