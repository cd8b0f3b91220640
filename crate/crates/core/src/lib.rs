//! Zero-bit image watermarking toolkit and attack-evaluation harness.
//!
//! Detection is a hypothesis test: a detector projects an image into an
//! M-dimensional subspace and compares the absolute cosine against a secret
//! axis, which gives a closed-form false-alarm probability through the
//! regularized incomplete beta function. The crate ships the classical
//! wavelet-domain scheme with secret hypercones, a recipe that turns any
//! multi-bit decoder into such a detector, four attacker scenarios, and a
//! benchmark harness that produces attack-success-rate versus distortion
//! curves at a guaranteed false-alarm level.

pub mod adapter;
pub mod attacks;
pub mod bench;
pub mod broken_arrows;
pub mod detector;
pub mod error;
pub mod hypercone;
pub mod image;
pub mod resample;
pub mod scalar;
pub mod sidecar;
pub mod transforms;

pub use error::{Error, Result};
pub use hypercone::PValue;
pub use image::{Decibels, Image, ImageBuf};
