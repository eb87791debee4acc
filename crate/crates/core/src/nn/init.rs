use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::Float;

/// Kaiming normal initialization for rectified layers.
pub fn he_normal<T: Float, R: Rng + ?Sized>(len: usize, fan_in: usize, rng: &mut R) -> Vec<T> {
    let std = (2.0 / fan_in.max(1) as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("positive std");
    (0..len)
        .map(|_| T::from_f64_lossy(dist.sample(rng)))
        .collect()
}

/// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub fn uniform_fan_in<T: Float, R: Rng + ?Sized>(len: usize, fan_in: usize, rng: &mut R) -> Vec<T> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    (0..len)
        .map(|_| T::from_f64_lossy(dist.sample(rng)))
        .collect()
}
