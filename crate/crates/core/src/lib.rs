//! Numerical core for joint emotion attribution and classification over
//! per-frame feature sequences.
//!
//! The crate is `no_std` (it needs `alloc`) and carries no IO. It contains:
//!
//! - [`tensor`] and [`graph`]: a small dense-tensor type and a tape-based
//!   reverse-mode differentiator covering exactly the layers the network uses,
//!   plus [`optim::Adam`] and a finite-difference [`gradcheck`].
//! - [`span`]: conversion between normalized segment parameters and frame
//!   times, clamping, and the differentiable segment sampler.
//! - [`model`]: the attribution network, the bi-stream classifier and the
//!   ablation / attention variants.
//! - [`train`]: the tIoU-gated joint objective and the epoch loop.
//! - [`metrics`], [`summarize`], [`baselines`], [`data`], [`synth`].
//!
//! File formats and the command-line tool live in the companion `beac` crate.

#![no_std]

extern crate alloc;

pub mod baselines;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod gradsuite;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod params;
pub mod scalar;
pub mod span;
pub mod summarize;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;

/// Deterministic RNG used throughout the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate RNG from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
