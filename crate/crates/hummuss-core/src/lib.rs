//! Core of a human-motion state-space model that lifts 2D keypoint streams
//! to 3D pose.
//!
//! The crate is organized bottom-up:
//!
//! * [`ssm`]: per-channel diagonal SSM parameters, zero-order-hold
//!   discretization, and closed-form convolution kernels;
//! * [`fft`]: the radix-2 FFT backing the sequence-parallel executor;
//! * [`layer`]: banks of SSM channels run either convolutionally over whole
//!   sequences or recurrently one frame at a time, with exact agreement
//!   between the two;
//! * [`block`]: gated spatiotemporal mixing blocks (bidirectional and causal);
//! * [`model`]: the assembled lift / spatiotemporal stack / head / readout,
//!   with batch and streaming entry points;
//! * [`tasks`]: losses, keypoint corruption, synthetic motion, and a
//!   finite-difference toy trainer.
//!
//! Everything here is `no_std` + `alloc`; file formats, the CLI, and timing
//! live in the companion binary crate.

#![no_std]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod block;
pub mod error;
pub mod fft;
pub mod layer;
pub mod linalg;
pub mod model;
pub mod ssm;
pub mod tasks;

pub use error::{Error, Result};
pub use num_complex::Complex64;
