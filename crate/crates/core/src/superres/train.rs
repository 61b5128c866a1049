use crate::error::{invalid, shape_err, Error, Result};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::rng::SplitMix64;
use crate::scalar::Real;
use crate::tensor::Tensor;

use super::generator::{forward_cached, l1_loss};
use super::{generator_l1_grad, GeneratorConfig, GeneratorParams};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SrTrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for SrTrainConfig {
    fn default() -> Self {
        SrTrainConfig {
            batch_size: 48,
            epochs: 500,
            lr: 1e-4,
            seed: 0,
        }
    }
}

/// Mean L1 loss per epoch; entry 0 is the untrained model.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SrHistory {
    pub losses: Vec<f64>,
    pub steps: u64,
}

impl SrHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,l1_loss\n");
        for (i, l) in self.losses.iter().enumerate() {
            out.push_str(&format!("{i},{l}\n"));
        }
        out
    }
}

fn check_pairs<T: Real>(pairs: &[(Tensor<T>, Tensor<T>)], config: &GeneratorConfig) -> Result<()> {
    if pairs.is_empty() {
        return Err(invalid!("training set is empty"));
    }
    let s = config.out_scale;
    for (i, (lr, hr)) in pairs.iter().enumerate() {
        let (c, h, w) = lr.dims3()?;
        let expect = [c, h * s, w * s];
        if hr.shape() != expect {
            return Err(shape_err!(
                "pair {i}: high-res shape {:?} does not match low-res {:?} at ×{s}",
                hr.shape(),
                lr.shape()
            ));
        }
    }
    Ok(())
}

/// Mini-batch Adam on mean absolute error between generator output and the
/// high-res target. Starts from `init` or a seeded initialization.
pub fn train_generator_l1<T: Real>(
    pairs: &[(Tensor<T>, Tensor<T>)],
    config: &GeneratorConfig,
    hyper: &SrTrainConfig,
    init: Option<GeneratorParams<T>>,
) -> Result<(GeneratorParams<T>, SrHistory)> {
    config.validate()?;
    check_pairs(pairs, config)?;
    if hyper.batch_size == 0 {
        return Err(invalid!("batch size must be positive"));
    }
    let mut params = init.unwrap_or_else(|| GeneratorParams::init(config, hyper.seed));
    let mut flat = params.to_model_params();
    let mut state = AdamState::for_params(&flat);
    let adam = AdamConfig::with_lr(hyper.lr);
    let mut rng = SplitMix64::new(hyper.seed ^ 0x5EED_5E1F);
    let n = pairs.len();

    let mut losses = Vec::with_capacity(n);
    for (lr, hr) in pairs {
        let out = forward_cached(lr, config, &params)?.output;
        losses.push(l1_loss(&out, hr)?.0.as_f64());
    }
    let mut history = SrHistory {
        losses: vec![losses.iter().sum::<f64>() / n as f64],
        steps: 0,
    };

    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 1..=hyper.epochs {
        rng.shuffle(&mut order);
        let mut epoch_losses = vec![0.0; n];
        for batch in order.chunks(hyper.batch_size) {
            let mut grad_sum = flat.zeros_like();
            for &i in batch {
                let (lr, hr) = &pairs[i];
                let (loss, grads) = generator_l1_grad(lr, hr, config, &params)?;
                epoch_losses[i] = loss.as_f64();
                grad_sum = grad_sum.add_scaled(&grads.to_model_params(), T::one())?;
            }
            let grads = grad_sum.scale(T::one() / T::lit(batch.len() as f64));
            history.steps += 1;
            let (next, next_state) = adam_step(&flat, &grads, &state, &adam, history.steps)?;
            flat = next;
            state = next_state;
            params = GeneratorParams::from_model_params(&flat, config)?;
        }
        if !flat.all_finite() {
            return Err(Error::NonFinite(format!("generator weights after epoch {epoch}")));
        }
        history.losses.push(epoch_losses.iter().sum::<f64>() / n as f64);
    }
    Ok((params, history))
}
