use rand::Rng;

use super::tensor::{Scalar, Tensor};

/// He-style uniform init: `U(-b, b)` with `b = sqrt(6 / fan_in)`.
pub fn he_uniform<T: Scalar, R: Rng + ?Sized>(
    shape: &[usize],
    fan_in: usize,
    rng: &mut R,
) -> Tensor<T> {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    Tensor::from_fn(shape, |_| T::from_f64(rng.random_range(-bound..bound)))
}
