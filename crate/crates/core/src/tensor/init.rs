use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Tensor;

/// I.i.d. `N(mean, std²)` values. Deterministic for a given generator state.
pub fn gaussian_sample<R: Rng + ?Sized>(shape: &[usize], mean: f64, std: f64, rng: &mut R) -> Tensor {
    assert!(std >= 0.0, "standard deviation must be non-negative");
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            mean + std * z
        })
        .collect();
    Tensor::new(data, shape.to_vec()).expect("length matches shape")
}

/// I.i.d. uniform values in `[lo, hi)`.
pub fn uniform_sample<R: Rng + ?Sized>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(data, shape.to_vec()).expect("length matches shape")
}
