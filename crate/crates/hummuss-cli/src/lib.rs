//! Library side of the `hummuss` command-line tool: weights container,
//! keypoint stream I/O, and the inference/benchmark/evaluation engines.
//! The binary in `main.rs` is a thin argument-parsing shell over this.

pub mod error;
pub mod keypoints;
pub mod run;
pub mod weights;

pub use error::CliError;
