//! Seeded parameter initialization.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::scalar::Real;
use crate::tensor::{Conv2DSpec, Tensor};

pub(crate) fn normal_tensor<T: Real, R: Rng>(rng: &mut R, shape: &[usize], std: f64) -> Tensor<T> {
    let dist = Normal::new(0.0, std).expect("finite std");
    Tensor::from_fn(shape, |_| T::lit(dist.sample(rng)))
}

/// Kaiming-normal weights (fan-in, leaky-ReLU gain) times `scale`, zero bias.
pub(crate) fn kaiming_conv<T: Real, R: Rng>(
    rng: &mut R,
    geometry: &Conv2DSpec<T>,
    slope: f64,
    scale: f64,
) -> Conv2DSpec<T> {
    let fan_in = geometry.in_channels() * geometry.kernel_size() * geometry.kernel_size();
    let gain = (2.0 / (1.0 + slope * slope)).sqrt();
    let std = gain / (fan_in as f64).sqrt() * scale;
    geometry
        .with_params(
            normal_tensor(rng, geometry.weight().shape(), std),
            Tensor::zeros(geometry.bias().shape()),
        )
        .expect("same geometry")
}
