//! Small RRDB super-resolution generator, a spectrally normalized U-Net
//! discriminator, and an L1 training loop.

mod discriminator;
mod generator;
mod train;

pub use discriminator::{discriminator_forward, Discriminator, DiscriminatorConfig, DiscriminatorParams};
pub use generator::{
    dense_block_forward, enhance, generator_forward, generator_l1_grad, l1_loss, rrdb_forward, unshuffle_factor,
};
pub use train::{train_generator_l1, SrHistory, SrTrainConfig};

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::init::kaiming_conv;
use crate::optim::ModelParams;
use crate::params_io::{self, parse_key_values};
use crate::scalar::Real;
use crate::tensor::Conv2DSpec;

pub const MAGIC: &[u8; 4] = b"CCSR";
/// Convolutions per dense block.
pub const DENSE_CONVS: usize = 5;
/// Dense blocks per RRDB.
pub const DENSE_BLOCKS: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub num_features: usize,
    pub num_rrdb: usize,
    pub growth_channels: usize,
    /// Residual scale β in (0, 1].
    pub residual_scale: f64,
    /// Output magnification, 1 to 4.
    pub out_scale: usize,
    pub leaky_slope: f64,
    pub kernel_size: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            num_features: 8,
            num_rrdb: 2,
            growth_channels: 4,
            residual_scale: 0.2,
            out_scale: 4,
            leaky_slope: 0.2,
            kernel_size: 3,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.out_scale) {
            return Err(invalid!("out_scale must be 1, 2, 3 or 4, got {}", self.out_scale));
        }
        if !(self.residual_scale > 0.0 && self.residual_scale <= 1.0) {
            return Err(invalid!("residual scale must be in (0, 1], got {}", self.residual_scale));
        }
        if self.num_features == 0 || self.growth_channels == 0 {
            return Err(invalid!("feature and growth channel counts must be positive"));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(invalid!("kernel size must be odd, got {}", self.kernel_size));
        }
        Ok(())
    }

    pub fn to_config_text(&self) -> String {
        format!(
            "num_features={}\nnum_rrdb={}\ngrowth_channels={}\nresidual_scale={}\nout_scale={}\nleaky_slope={}\nkernel_size={}\n",
            self.num_features,
            self.num_rrdb,
            self.growth_channels,
            self.residual_scale,
            self.out_scale,
            self.leaky_slope,
            self.kernel_size
        )
    }

    pub fn from_config_text(text: &str) -> Result<Self> {
        let mut cfg = GeneratorConfig::default();
        for (k, v) in parse_key_values(text)? {
            let bad = || Error::ModelFormat(format!("bad generator config {k}={v}"));
            match k.as_str() {
                "num_features" => cfg.num_features = v.parse().map_err(|_| bad())?,
                "num_rrdb" => cfg.num_rrdb = v.parse().map_err(|_| bad())?,
                "growth_channels" => cfg.growth_channels = v.parse().map_err(|_| bad())?,
                "residual_scale" => cfg.residual_scale = v.parse().map_err(|_| bad())?,
                "out_scale" => cfg.out_scale = v.parse().map_err(|_| bad())?,
                "leaky_slope" => cfg.leaky_slope = v.parse().map_err(|_| bad())?,
                "kernel_size" => cfg.kernel_size = v.parse().map_err(|_| bad())?,
                _ => return Err(Error::ModelFormat(format!("unknown generator config key `{k}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Five densely connected convs; conv `i` (0-based) sees `F + i·G` channels.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseBlockParams<T> {
    pub convs: Vec<Conv2DSpec<T>>,
}

impl<T: Real> DenseBlockParams<T> {
    pub fn zeros(features: usize, growth: usize, kernel: usize) -> Self {
        let convs = (0..DENSE_CONVS)
            .map(|i| {
                let out = if i + 1 == DENSE_CONVS { features } else { growth };
                Conv2DSpec::same(features + i * growth, out, kernel)
            })
            .collect();
        DenseBlockParams { convs }
    }

    pub fn features(&self) -> usize {
        self.convs[0].in_channels()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RrdbParams<T> {
    pub blocks: Vec<DenseBlockParams<T>>,
}

impl<T: Real> RrdbParams<T> {
    pub fn zeros(features: usize, growth: usize, kernel: usize) -> Self {
        RrdbParams {
            blocks: (0..DENSE_BLOCKS)
                .map(|_| DenseBlockParams::zeros(features, growth, kernel))
                .collect(),
        }
    }

    pub fn features(&self) -> usize {
        self.blocks[0].features()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorParams<T> {
    pub conv_first: Conv2DSpec<T>,
    pub trunk: Vec<RrdbParams<T>>,
    pub conv_body: Conv2DSpec<T>,
    pub conv_up1: Conv2DSpec<T>,
    pub conv_up2: Conv2DSpec<T>,
    pub conv_hr: Conv2DSpec<T>,
    pub conv_last: Conv2DSpec<T>,
}

impl<T: Real> GeneratorParams<T> {
    pub fn zeros(config: &GeneratorConfig) -> Self {
        let (f, g, k) = (config.num_features, config.growth_channels, config.kernel_size);
        let r = unshuffle_factor(config.out_scale);
        GeneratorParams {
            conv_first: Conv2DSpec::same(3 * r * r, f, k),
            trunk: (0..config.num_rrdb).map(|_| RrdbParams::zeros(f, g, k)).collect(),
            conv_body: Conv2DSpec::same(f, f, k),
            conv_up1: Conv2DSpec::same(f, f, k),
            conv_up2: Conv2DSpec::same(f, f, k),
            conv_hr: Conv2DSpec::same(f, f, k),
            conv_last: Conv2DSpec::same(f, 3, k),
        }
    }

    /// Kaiming-normal weights; dense-block convs are scaled by 0.1 so each
    /// residual branch starts close to identity.
    pub fn init(config: &GeneratorConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(config);
        let slope = config.leaky_slope;
        for (name, conv) in p.convs_mut() {
            let scale = if name.starts_with("rrdb") { 0.1 } else { 1.0 };
            *conv = kaiming_conv(&mut rng, conv, slope, scale);
        }
        p
    }

    /// Every conv with its stable parameter-name prefix, in forward order.
    pub fn convs(&self) -> Vec<(String, &Conv2DSpec<T>)> {
        let mut out = vec![("conv_first".to_string(), &self.conv_first)];
        for (r, rrdb) in self.trunk.iter().enumerate() {
            for (b, block) in rrdb.blocks.iter().enumerate() {
                for (c, conv) in block.convs.iter().enumerate() {
                    out.push((format!("rrdb{r}.db{b}.conv{c}"), conv));
                }
            }
        }
        out.push(("conv_body".into(), &self.conv_body));
        out.push(("conv_up1".into(), &self.conv_up1));
        out.push(("conv_up2".into(), &self.conv_up2));
        out.push(("conv_hr".into(), &self.conv_hr));
        out.push(("conv_last".into(), &self.conv_last));
        out
    }

    pub fn convs_mut(&mut self) -> Vec<(String, &mut Conv2DSpec<T>)> {
        let mut out = vec![("conv_first".to_string(), &mut self.conv_first)];
        for (r, rrdb) in self.trunk.iter_mut().enumerate() {
            for (b, block) in rrdb.blocks.iter_mut().enumerate() {
                for (c, conv) in block.convs.iter_mut().enumerate() {
                    out.push((format!("rrdb{r}.db{b}.conv{c}"), conv));
                }
            }
        }
        out.push(("conv_body".into(), &mut self.conv_body));
        out.push(("conv_up1".into(), &mut self.conv_up1));
        out.push(("conv_up2".into(), &mut self.conv_up2));
        out.push(("conv_hr".into(), &mut self.conv_hr));
        out.push(("conv_last".into(), &mut self.conv_last));
        out
    }

    pub fn all_finite(&self) -> bool {
        self.convs()
            .iter()
            .all(|(_, c)| c.weight().all_finite() && c.bias().all_finite())
    }

    pub fn to_model_params(&self) -> ModelParams<T> {
        let mut m = ModelParams::new();
        for (name, conv) in self.convs() {
            m.push(format!("{name}.weight"), conv.weight().clone());
            m.push(format!("{name}.bias"), conv.bias().clone());
        }
        m
    }

    /// Rebuilds from named tensors, checking every shape against `config`.
    pub fn from_model_params(params: &ModelParams<T>, config: &GeneratorConfig) -> Result<Self> {
        let mut p = Self::zeros(config);
        p.to_model_params().check_compatible(params)?;
        for (name, conv) in p.convs_mut() {
            let w = params.get(&format!("{name}.weight")).expect("checked above");
            let b = params.get(&format!("{name}.bias")).expect("checked above");
            *conv = conv.with_params(w.clone(), b.clone())?;
        }
        Ok(p)
    }

    pub fn save(&self, path: impl AsRef<Path>, config: &GeneratorConfig) -> Result<()> {
        params_io::write_params_file(path, MAGIC, &config.to_config_text(), &self.to_model_params())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, GeneratorConfig)> {
        let (text, params) = params_io::read_params_file(path, MAGIC)?;
        let config = GeneratorConfig::from_config_text(&text)?;
        Ok((Self::from_model_params(&params, &config)?, config))
    }
}
