//! Seeded synthetic signal sets for desk-scale runs.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::Signals;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineConfig {
    pub n: usize,
    pub channels: usize,
    pub len: usize,
    pub fs: f64,
    pub freq: f64,
    pub amplitude: f64,
    pub noise_std: f64,
    /// Rescale every channel to `[-1, 1]` by its own min and max.
    pub normalize: bool,
    pub seed: u64,
}

impl Default for SineConfig {
    fn default() -> Self {
        SineConfig {
            n: 64,
            channels: 2,
            len: 128,
            fs: 160.0,
            freq: 10.0,
            amplitude: 1.0,
            noise_std: 0.2,
            normalize: true,
            seed: 0,
        }
    }
}

/// `amplitude · sin(2π f t + φ) + noise` per channel, with a uniformly random
/// phase `φ` per channel and white Gaussian noise.
pub fn sine_dataset(cfg: &SineConfig) -> Result<Signals> {
    if cfg.channels == 0 || cfg.len < 2 || !(cfg.fs > 0.0) {
        return Err(Error::InvalidInput("sine dataset needs channels, len >= 2 and fs > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut data = Vec::with_capacity(cfg.n * cfg.channels * cfg.len);
    for _ in 0..cfg.n * cfg.channels {
        let phase = rng.random_range(0.0..2.0 * PI);
        let start = data.len();
        for t in 0..cfg.len {
            let noise: f64 = rng.sample(StandardNormal);
            let s = cfg.amplitude * (2.0 * PI * cfg.freq * t as f64 / cfg.fs + phase).sin();
            data.push(s + cfg.noise_std * noise);
        }
        if cfg.normalize {
            let ch = &mut data[start..];
            let lo = ch.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = ch.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                ch.iter_mut().for_each(|v| *v = 2.0 * (*v - lo) / (hi - lo) - 1.0);
            }
        }
    }
    Signals::new(data, cfg.n, cfg.channels, cfg.len)
}

/// Two-class set where every channel of a sample is the constant
/// `offset ± spread·u` for class 0 (`−`) and 1 (`+`), `u ~ U[0.2, 1)`.
/// Returns the signals and their labels, alternating classes.
pub fn constant_two_class(n_per_class: usize, channels: usize, len: usize, seed: u64) -> Result<(Signals, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(2 * n_per_class * channels * len);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for i in 0..2 * n_per_class {
        let label = i % 2;
        let sign = if label == 0 { -1.0 } else { 1.0 };
        for _ in 0..channels {
            let v = sign * rng.random_range(0.2..1.0);
            data.extend(std::iter::repeat_n(v, len));
        }
        labels.push(label);
    }
    Ok((Signals::new(data, 2 * n_per_class, channels, len)?, labels))
}
