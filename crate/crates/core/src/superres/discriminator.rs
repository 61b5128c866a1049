use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, shape_err, Result};
use crate::init::kaiming_conv;
use crate::scalar::Real;
use crate::spectral::{power_iteration_sigma, SpectralNorm};
use crate::tensor::{conv2d, leaky_relu, nearest_upsample, Conv2DSpec, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorConfig {
    pub num_features: usize,
    /// Number of stride-2 encoder stages (and matching decoder stages).
    pub depth: usize,
    pub leaky_slope: f64,
    pub power_iterations: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            num_features: 8,
            depth: 2,
            leaky_slope: 0.2,
            power_iterations: 200,
        }
    }
}

/// U-Net discriminator weights, stored raw (before spectral normalization).
#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorParams<T> {
    pub conv_first: Conv2DSpec<T>,
    /// Stride-2 convs; stage `i` maps `F·2^i` to `F·2^(i+1)` channels.
    pub encoders: Vec<Conv2DSpec<T>>,
    /// Stage `i` runs after a ×2 nearest upsample and adds the encoder
    /// feature map of matching resolution.
    pub decoders: Vec<Conv2DSpec<T>>,
    pub conv_a: Conv2DSpec<T>,
    pub conv_b: Conv2DSpec<T>,
    pub head: Conv2DSpec<T>,
}

impl<T: Real> DiscriminatorParams<T> {
    pub fn zeros(config: &DiscriminatorConfig) -> Self {
        let f = config.num_features;
        let d = config.depth;
        DiscriminatorParams {
            conv_first: Conv2DSpec::same(3, f, 3),
            encoders: (0..d)
                .map(|i| Conv2DSpec::zeros(f << i, f << (i + 1), 3, 2, 1))
                .collect(),
            decoders: (0..d)
                .map(|i| Conv2DSpec::same(f << (d - i), f << (d - i - 1), 3))
                .collect(),
            conv_a: Conv2DSpec::same(f, f, 3),
            conv_b: Conv2DSpec::same(f, f, 3),
            head: Conv2DSpec::same(f, 1, 3),
        }
    }

    pub fn init(config: &DiscriminatorConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(config);
        for conv in p.convs_mut() {
            *conv = kaiming_conv(&mut rng, conv, config.leaky_slope, 1.0);
        }
        p
    }

    pub fn convs(&self) -> Vec<&Conv2DSpec<T>> {
        let mut out = vec![&self.conv_first];
        out.extend(&self.encoders);
        out.extend(&self.decoders);
        out.extend([&self.conv_a, &self.conv_b, &self.head]);
        out
    }

    pub fn convs_mut(&mut self) -> Vec<&mut Conv2DSpec<T>> {
        let mut out = vec![&mut self.conv_first];
        out.extend(self.encoders.iter_mut());
        out.extend(self.decoders.iter_mut());
        out.extend([&mut self.conv_a, &mut self.conv_b, &mut self.head]);
        out
    }

    /// Copy with every conv weight divided by its estimated largest singular
    /// value. All-zero weights are left as they are.
    pub fn normalized(&self, power_iterations: usize) -> Result<Self> {
        let mut out = self.clone();
        for conv in out.convs_mut() {
            let sigma = power_iteration_sigma(&weight_matrix(conv)?, power_iterations)?;
            *conv = divide_weight(conv, sigma)?;
        }
        Ok(out)
    }
}

/// `out × (in·k·k)` view of a conv weight.
pub(crate) fn weight_matrix<T: Real>(conv: &Conv2DSpec<T>) -> Result<Tensor<T>> {
    let k = conv.kernel_size();
    conv.weight()
        .reshape(&[conv.out_channels(), conv.in_channels() * k * k])
}

fn divide_weight<T: Real>(conv: &Conv2DSpec<T>, sigma: T) -> Result<Conv2DSpec<T>> {
    if sigma <= T::zero() {
        return Ok(conv.clone());
    }
    conv.with_params(conv.weight().scale(T::one() / sigma), conv.bias().clone())
}

fn run<T: Real>(image: &Tensor<T>, config: &DiscriminatorConfig, p: &DiscriminatorParams<T>) -> Result<Tensor<T>> {
    let (c, h, w) = image.dims3()?;
    if c != 3 {
        return Err(shape_err!("discriminator expects 3 channels, got {c}"));
    }
    let m = 1usize << config.depth;
    if h % m != 0 || w % m != 0 {
        return Err(shape_err!("input {h}×{w} must be divisible by {m} for depth {}", config.depth));
    }
    let slope = T::lit(config.leaky_slope);
    let mut skips = vec![leaky_relu(&conv2d(image, &p.conv_first)?, slope)];
    for enc in &p.encoders {
        let x = leaky_relu(&conv2d(skips.last().unwrap(), enc)?, slope);
        skips.push(x);
    }
    let mut x = skips.pop().unwrap();
    for dec in &p.decoders {
        let up = leaky_relu(&conv2d(&nearest_upsample(&x, 2)?, dec)?, slope);
        x = up.add(&skips.pop().expect("one skip per decoder"))?;
    }
    let x = leaky_relu(&conv2d(&x, &p.conv_a)?, slope);
    let x = leaky_relu(&conv2d(&x, &p.conv_b)?, slope);
    conv2d(&x, &p.head)
}

/// Per-pixel realness map `1×H×W`. Each conv weight is spectrally normalized
/// from a fresh power iteration before use.
pub fn discriminator_forward<T: Real>(
    image: &Tensor<T>,
    config: &DiscriminatorConfig,
    params: &DiscriminatorParams<T>,
) -> Result<Tensor<T>> {
    if config.depth == 0 || config.num_features == 0 {
        return Err(invalid!("discriminator needs positive depth and width"));
    }
    run(image, config, &params.normalized(config.power_iterations)?)
}

/// Discriminator that keeps one power-iteration vector per conv across calls.
#[derive(Clone, Debug)]
pub struct Discriminator<T> {
    pub config: DiscriminatorConfig,
    pub params: DiscriminatorParams<T>,
    norms: Vec<SpectralNorm<T>>,
}

impl<T: Real> Discriminator<T> {
    pub fn new(config: DiscriminatorConfig, params: DiscriminatorParams<T>) -> Self {
        let norms = params
            .convs()
            .iter()
            .map(|c| {
                let k = c.kernel_size();
                SpectralNorm::new(c.in_channels() * k * k, config.power_iterations)
            })
            .collect();
        Discriminator { config, params, norms }
    }

    pub fn forward(&mut self, image: &Tensor<T>) -> Result<Tensor<T>> {
        let mut normalized = self.params.clone();
        for (conv, norm) in normalized.convs_mut().into_iter().zip(&mut self.norms) {
            let sigma = norm.estimate(&weight_matrix(conv)?)?;
            *conv = divide_weight(conv, sigma)?;
        }
        run(image, &self.config, &normalized)
    }
}
