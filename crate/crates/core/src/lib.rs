//! Layer-wise probing and single-filter functionality analysis for trained
//! convolutional classifiers.
//!
//! The crate works on exported, post-pooling activations (`FLA1` files) and
//! covers three stages:
//!
//! 1. [`probe`]: train a bias-free linear read-out on frozen features and
//!    measure its success rate.
//! 2. [`filters`]: silence every probe weight except those of one filter and
//!    characterize that filter through decision and field matrices, their
//!    clipped Boolean version, diagonal clusters and noise.
//! 3. [`stats`] and [`snr`]: aggregate per-filter results into layer tables
//!    and a signal-to-noise account of classification.
//!
//! [`store`] and [`synthetic`] provide the file formats and a planted-cluster
//! generator that lets the whole pipeline run without a deep learning framework.

pub mod error;
pub mod filters;
pub mod pipeline;
pub mod probe;
pub mod snr;
pub mod stats;
pub mod store;
pub mod synthetic;

pub use error::{Error, Result};
pub use store::{ActivationSet, ProbeWeights, Split};

/// Rounds to six significant digits. Reports go through this so that text
/// output is stable across platforms.
pub fn round_sig6(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.5e}", x).parse().unwrap_or(x)
}
