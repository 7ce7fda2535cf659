//! Command-line surface and file formats for the stereo-trained monocular
//! depth estimator: dataset generation, training, inference, evaluation.

pub mod commands;
pub mod config;
pub mod error;
pub mod pfm;
pub mod ppm;
pub mod store;
pub mod trace;

pub use error::{CliError, CliResult};
