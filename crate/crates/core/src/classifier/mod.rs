//! Two-class convolutional classifier: populated vs. depopulated fields.
//!
//! `[conv3×3 → leaky-ReLU → max-pool 2×2] × blocks → global average pool → dense → 2 logits`

mod train;

pub use train::{load_split_images, train, EpochStats, LabeledImage, LabeledSet, TrainHistory};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::classes::CropClass;
use crate::error::{invalid, shape_err, Error, Result};
use crate::image_io::{normalize, resize, ImageBuffer};
use crate::init::{kaiming_conv, normal_tensor};
use crate::metrics::ConfusionMatrix;
use crate::optim::ModelParams;
use crate::params_io::{self, parse_key_values};
use crate::scalar::Real;
use crate::tensor::{
    conv2d, conv2d_backward, global_avg_pool, global_avg_pool_backward, leaky_relu, leaky_relu_backward,
    max_pool2, max_pool2_backward, softmax, Conv2DSpec, MaxPoolIndices, Tensor,
};

pub const MAGIC: &[u8; 4] = b"CCCL";
pub const NUM_CLASSES: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierConfig {
    /// Square input side in pixels.
    pub input_size: usize,
    /// Output channels of each conv block.
    pub conv_channels: Vec<usize>,
    pub kernel_size: usize,
    pub leaky_slope: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            input_size: 224,
            conv_channels: vec![8, 16, 32],
            kernel_size: 3,
            leaky_slope: 0.2,
            lr: 1e-3,
            batch_size: 32,
            epochs: 5,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.conv_channels.is_empty() || self.conv_channels.contains(&0) {
            return Err(invalid!("classifier needs at least one conv block with positive width"));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(invalid!("kernel size must be odd, got {}", self.kernel_size));
        }
        if self.input_size >> self.conv_channels.len() == 0 {
            return Err(invalid!(
                "input {} is too small for {} pooling stages",
                self.input_size,
                self.conv_channels.len()
            ));
        }
        if self.batch_size == 0 {
            return Err(invalid!("batch size must be positive"));
        }
        Ok(())
    }

    pub fn feature_channels(&self) -> usize {
        *self.conv_channels.last().unwrap()
    }

    /// Architecture fields as `key=value` lines (training hyperparameters are not stored).
    pub fn to_config_text(&self) -> String {
        let channels: Vec<String> = self.conv_channels.iter().map(ToString::to_string).collect();
        format!(
            "input_size={}\nconv_channels={}\nkernel_size={}\nleaky_slope={}\n",
            self.input_size,
            channels.join(","),
            self.kernel_size,
            self.leaky_slope
        )
    }

    pub fn from_config_text(text: &str) -> Result<Self> {
        let mut cfg = ClassifierConfig::default();
        let bad = |k: &str, v: &str| Error::ModelFormat(format!("bad classifier config {k}={v}"));
        for (k, v) in parse_key_values(text)? {
            match k.as_str() {
                "input_size" => cfg.input_size = v.parse().map_err(|_| bad(&k, &v))?,
                "kernel_size" => cfg.kernel_size = v.parse().map_err(|_| bad(&k, &v))?,
                "leaky_slope" => cfg.leaky_slope = v.parse().map_err(|_| bad(&k, &v))?,
                "conv_channels" => {
                    cfg.conv_channels = v
                        .split(',')
                        .map(|c| c.trim().parse())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad(&k, &v))?
                }
                _ => return Err(Error::ModelFormat(format!("unknown classifier config key `{k}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Classifier weights. Gradients use the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierParams<T> {
    pub convs: Vec<Conv2DSpec<T>>,
    /// `2 × C` dense weights.
    pub dense_weight: Tensor<T>,
    pub dense_bias: Tensor<T>,
}

impl<T: Real> ClassifierParams<T> {
    pub fn zeros(config: &ClassifierConfig) -> Self {
        let mut in_ch = 3;
        let convs = config
            .conv_channels
            .iter()
            .map(|&out| {
                let c = Conv2DSpec::same(in_ch, out, config.kernel_size);
                in_ch = out;
                c
            })
            .collect();
        ClassifierParams {
            convs,
            dense_weight: Tensor::zeros(&[NUM_CLASSES, config.feature_channels()]),
            dense_bias: Tensor::zeros(&[NUM_CLASSES]),
        }
    }

    /// Kaiming-normal convs, small normal dense weights, zero biases.
    pub fn init(config: &ClassifierConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(config);
        p.convs = p
            .convs
            .iter()
            .map(|c| kaiming_conv(&mut rng, c, config.leaky_slope, 1.0))
            .collect();
        let fan_in = config.feature_channels() as f64;
        p.dense_weight = normal_tensor(&mut rng, p.dense_weight.shape(), 1.0 / fan_in.sqrt());
        p
    }

    pub fn to_model_params(&self) -> ModelParams<T> {
        let mut m = ModelParams::new();
        for (i, c) in self.convs.iter().enumerate() {
            m.push(format!("conv{i}.weight"), c.weight().clone());
            m.push(format!("conv{i}.bias"), c.bias().clone());
        }
        m.push("dense.weight", self.dense_weight.clone());
        m.push("dense.bias", self.dense_bias.clone());
        m
    }

    /// Rebuilds from named tensors, checking every shape against `config`.
    pub fn from_model_params(params: &ModelParams<T>, config: &ClassifierConfig) -> Result<Self> {
        let template = Self::zeros(config);
        template.to_model_params().check_compatible(params)?;
        let get = |n: &str| params.get(n).cloned().expect("checked above");
        let convs = template
            .convs
            .iter()
            .enumerate()
            .map(|(i, c)| c.with_params(get(&format!("conv{i}.weight")), get(&format!("conv{i}.bias"))))
            .collect::<Result<_>>()?;
        Ok(ClassifierParams {
            convs,
            dense_weight: get("dense.weight"),
            dense_bias: get("dense.bias"),
        })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>, config: &ClassifierConfig) -> Result<()> {
        params_io::write_params_file(path, MAGIC, &config.to_config_text(), &self.to_model_params())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<(Self, ClassifierConfig)> {
        let (text, params) = params_io::read_params_file(path, MAGIC)?;
        let config = ClassifierConfig::from_config_text(&text)?;
        Ok((Self::from_model_params(&params, &config)?, config))
    }
}

struct BlockCache<T> {
    input: Tensor<T>,
    pre: Tensor<T>,
    pool: MaxPoolIndices,
}

pub(crate) struct ForwardCache<T> {
    blocks: Vec<BlockCache<T>>,
    last_hw: (usize, usize),
    features: Tensor<T>,
    pub(crate) logits: Tensor<T>,
}

fn check_input<T: Real>(image: &Tensor<T>, config: &ClassifierConfig) -> Result<()> {
    let (c, h, w) = image.dims3()?;
    let s = config.input_size;
    if (c, h, w) != (3, s, s) {
        return Err(shape_err!(
            "classifier expects a 3×{s}×{s} input, got {c}×{h}×{w}; resize the image to {s}×{s} first"
        ));
    }
    Ok(())
}

pub(crate) fn forward_cached<T: Real>(
    image: &Tensor<T>,
    config: &ClassifierConfig,
    params: &ClassifierParams<T>,
) -> Result<ForwardCache<T>> {
    check_input(image, config)?;
    let slope = T::lit(config.leaky_slope);
    let mut x = image.clone();
    let mut blocks = Vec::with_capacity(params.convs.len());
    for conv in &params.convs {
        let pre = conv2d(&x, conv)?;
        let (pooled, pool) = max_pool2(&leaky_relu(&pre, slope))?;
        blocks.push(BlockCache { input: x, pre, pool });
        x = pooled;
    }
    let (_, h, w) = x.dims3()?;
    let features = global_avg_pool(&x)?;
    let c = features.len();
    let wd = params.dense_weight.data();
    let logits = (0..NUM_CLASSES)
        .map(|k| {
            let row = &wd[k * c..(k + 1) * c];
            row.iter().zip(features.data()).map(|(&a, &b)| a * b).sum::<T>() + params.dense_bias.data()[k]
        })
        .collect();
    Ok(ForwardCache {
        blocks,
        last_hw: (h, w),
        features,
        logits: Tensor::from_parts(vec![NUM_CLASSES], logits),
    })
}

pub(crate) fn backward<T: Real>(
    cache: &ForwardCache<T>,
    config: &ClassifierConfig,
    params: &ClassifierParams<T>,
    grad_logits: &Tensor<T>,
) -> Result<ClassifierParams<T>> {
    let slope = T::lit(config.leaky_slope);
    let c = cache.features.len();
    let g = grad_logits.data();
    let f = cache.features.data();
    let dense_weight = Tensor::from_fn(&[NUM_CLASSES, c], |i| g[i / c] * f[i % c]);
    let wd = params.dense_weight.data();
    let grad_features = Tensor::from_fn(&[c], |j| (0..NUM_CLASSES).map(|k| wd[k * c + j] * g[k]).sum());
    let (h, w) = cache.last_hw;
    let mut grad = global_avg_pool_backward(&grad_features, h, w)?;

    let mut convs = vec![None; params.convs.len()];
    for (i, (block, conv)) in cache.blocks.iter().zip(&params.convs).enumerate().rev() {
        let grad_act = max_pool2_backward(&block.pool, &grad)?;
        let grad_pre = leaky_relu_backward(&block.pre, &grad_act, slope)?;
        let cg = conv2d_backward(&block.input, conv, &grad_pre, i > 0)?;
        convs[i] = Some(conv.with_params(cg.weight, cg.bias)?);
        if let Some(gi) = cg.input {
            grad = gi;
        }
    }
    Ok(ClassifierParams {
        convs: convs.into_iter().map(Option::unwrap).collect(),
        dense_weight,
        dense_bias: grad_logits.clone(),
    })
}

/// Raw class scores for a `3×S×S` input.
pub fn forward<T: Real>(image: &Tensor<T>, config: &ClassifierConfig, params: &ClassifierParams<T>) -> Result<Tensor<T>> {
    Ok(forward_cached(image, config, params)?.logits)
}

/// Softmax cross-entropy of one example and its gradient with respect to the logits.
pub fn cross_entropy<T: Real>(logits: &Tensor<T>, label: CropClass) -> Result<(T, Tensor<T>)> {
    let probs = softmax(logits)?;
    let k = label.index();
    // log-softmax computed directly for stability
    let max = logits.data().iter().copied().fold(T::neg_infinity(), T::max);
    let log_sum = logits.data().iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
    let loss = log_sum - logits.data()[k];
    let grad = Tensor::from_fn(&[logits.len()], |i| {
        probs.data()[i] - if i == k { T::one() } else { T::zero() }
    });
    Ok((loss, grad))
}

/// Loss, logits and parameter gradients for one labeled example.
pub fn loss_and_grad<T: Real>(
    image: &Tensor<T>,
    label: CropClass,
    config: &ClassifierConfig,
    params: &ClassifierParams<T>,
) -> Result<(T, Tensor<T>, ClassifierParams<T>)> {
    let cache = forward_cached(image, config, params)?;
    let (loss, grad_logits) = cross_entropy(&cache.logits, label)?;
    let grads = backward(&cache, config, params, &grad_logits)?;
    Ok((loss, cache.logits, grads))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prediction {
    /// Probabilities in [`CropClass::ALL`] order.
    pub probs: [f64; NUM_CLASSES],
    pub label: CropClass,
}

impl Prediction {
    /// Argmax with ties going to the first class.
    pub fn from_logits<T: Real>(logits: &Tensor<T>) -> Result<Self> {
        let p = softmax(logits)?;
        let probs = [p.data()[0].as_f64(), p.data()[1].as_f64()];
        let label = if probs[1] > probs[0] {
            CropClass::Despoblada
        } else {
            CropClass::Poblada
        };
        Ok(Prediction { probs, label })
    }

    pub fn probability(&self, class: CropClass) -> f64 {
        self.probs[class.index()]
    }

    pub fn to_json(&self) -> String {
        format!(
            "{{\"label\":\"{}\",\"probs\":{{\"{}\":{},\"{}\":{}}}}}",
            self.label,
            CropClass::Poblada,
            self.probs[0],
            CropClass::Despoblada,
            self.probs[1]
        )
    }
}

/// Converts any image into the network's input tensor: gray is replicated to
/// RGB, then resized to `input_size` square and scaled to `[0, 1]`.
pub fn prepare_input<T: Real>(image: &ImageBuffer, config: &ClassifierConfig) -> Result<Tensor<T>> {
    let rgb = image.to_rgb();
    let sized = resize(&rgb, config.input_size, config.input_size)?;
    Ok(normalize(&sized))
}

pub fn predict<T: Real>(image: &ImageBuffer, config: &ClassifierConfig, params: &ClassifierParams<T>) -> Result<Prediction> {
    let input = prepare_input::<T>(image, config)?;
    Prediction::from_logits(&forward(&input, config, params)?)
}

pub fn evaluate<T: Real>(
    test_set: &[LabeledImage<T>],
    config: &ClassifierConfig,
    params: &ClassifierParams<T>,
) -> Result<ConfusionMatrix> {
    let mut m = ConfusionMatrix::default();
    for example in test_set {
        let p = Prediction::from_logits(&forward(&example.input, config, params)?)?;
        m.record(example.label, p.label);
    }
    Ok(m)
}
