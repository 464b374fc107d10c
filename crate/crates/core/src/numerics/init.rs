use rand::Rng;
use rand_distr::StandardNormal;

use super::{r, Real, Tensor};

/// He-style weights: zero-mean normal with standard deviation `sqrt(2 / fan_in)`.
///
/// Draws are made in `f64` and rounded, so a seed produces the same parameters
/// (up to rounding) in either precision.
pub fn init_weights<T: Real>(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor<T> {
    let std = (2.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| r::<T>(std * rng.sample::<f64, _>(StandardNormal)))
        .collect();
    Tensor::from_vec(shape, data).expect("shape product matches")
}

pub fn init_bias<T: Real>(len: usize) -> Tensor<T> {
    Tensor::zeros(&[len])
}
