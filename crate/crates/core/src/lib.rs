//! Wasserstein GAN with gradient penalty for multichannel EEG synthesis.
//!
//! - [`tensor`]: reverse-mode autodiff with higher-order gradients, Adam.
//! - [`edf`]: EDF parsing/writing and dataset preprocessing.
//! - [`wgan`]: generator/critic, WGAN-GP losses, training, checkpoints.
//! - [`metrics`]: Welch PSD, band power, Fréchet distance, topographic maps.
//! - [`classify`]: CNN/FNN classifiers and the augmentation benchmark.
//! - [`gradcheck`]: finite-difference verification of every op.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod edf;
mod error;
pub mod gradcheck;
pub mod metrics;
pub mod params;
mod signals;
pub mod synth;
pub mod tensor;
pub mod wgan;

pub use error::{Error, Result};
pub use signals::Signals;
