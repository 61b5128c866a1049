pub mod classes;
pub mod classifier;
pub mod coverage;
pub mod error;
pub mod image_io;
mod init;
pub mod metrics;
pub mod optim;
pub mod params_io;
pub mod rng;
pub mod scalar;
pub mod spectral;
pub mod superres;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Tensor64 = tensor::Tensor<f64>;
pub type Tensor32 = tensor::Tensor<f32>;
pub type ClassifierParams64 = classifier::ClassifierParams<f64>;
pub type ClassifierParams32 = classifier::ClassifierParams<f32>;
pub type GeneratorParams64 = superres::GeneratorParams<f64>;
pub type GeneratorParams32 = superres::GeneratorParams<f32>;
