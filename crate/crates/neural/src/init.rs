use clam_numerics::{rng::Rng, Real, Tensor, LEAKY_SLOPE};
use rand::Rng as _;

/// Kaiming-uniform weights for a `fan_in × fan_out` matrix, gain tuned for
/// LeakyReLU with the shared negative slope.
pub fn kaiming_uniform<T: Real>(rng: &mut Rng, fan_in: usize, fan_out: usize) -> Tensor<T> {
    let bound = (6.0 / ((1.0 + LEAKY_SLOPE * LEAKY_SLOPE) * fan_in as f64)).sqrt();
    Tensor::from_fn([fan_in, fan_out], |_| T::lit(rng.random_range(-bound..bound)))
}

/// Uniform entries in `[-bound, bound)`.
pub fn uniform<T: Real>(rng: &mut Rng, shape: &[usize], bound: f64) -> Tensor<T> {
    Tensor::from_fn(shape.to_vec(), |_| T::lit(rng.random_range(-bound..bound)))
}
