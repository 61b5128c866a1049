use std::path::Path;

use crate::classes::CropClass;
use crate::error::{invalid, Result};
use crate::image_io::{load_image, DatasetSplit};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::rng::SplitMix64;
use crate::scalar::Real;
use crate::tensor::Tensor;

use super::{loss_and_grad, prepare_input, ClassifierConfig, ClassifierParams, Prediction};

/// A network-ready input with its ground-truth class.
#[derive(Clone, Debug)]
pub struct LabeledImage<T> {
    pub input: Tensor<T>,
    pub label: CropClass,
}

pub type LabeledSet<T> = Vec<LabeledImage<T>>;

/// Loads and prepares both halves of a split. Class directory names must
/// parse as a [`CropClass`].
pub fn load_split_images<T: Real>(
    root: impl AsRef<Path>,
    split: &DatasetSplit,
    config: &ClassifierConfig,
) -> Result<(LabeledSet<T>, LabeledSet<T>)> {
    let root = root.as_ref();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in &split.classes {
        let label: CropClass = class.name.parse()?;
        for (files, out) in [(&class.train, &mut train), (&class.test, &mut test)] {
            for f in files {
                let image = load_image(root.join(&class.name).join(f))?;
                out.push(LabeledImage {
                    input: prepare_input(&image, config)?,
                    label,
                });
            }
        }
    }
    Ok((train, test))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    /// `None` when no validation set was given.
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
}

/// One row per epoch; row 0 describes the untrained model.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,train_acc,val_loss,val_acc";

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.epoch,
                e.train_loss,
                e.train_acc,
                opt(e.val_loss),
                opt(e.val_acc)
            ));
        }
        out
    }

    pub fn initial(&self) -> Option<&EpochStats> {
        self.epochs.first()
    }

    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

fn loss_and_accuracy<T: Real>(
    set: &[LabeledImage<T>],
    config: &ClassifierConfig,
    params: &ClassifierParams<T>,
) -> Result<(f64, f64)> {
    let mut losses = Vec::with_capacity(set.len());
    let mut correct = 0usize;
    for ex in set {
        let logits = super::forward(&ex.input, config, params)?;
        let (loss, _) = super::cross_entropy(&logits, ex.label)?;
        losses.push(loss.as_f64());
        correct += usize::from(Prediction::from_logits(&logits)?.label == ex.label);
    }
    let n = set.len() as f64;
    Ok((losses.iter().sum::<f64>() / n, correct as f64 / n))
}

/// Mini-batch Adam on mean softmax cross-entropy. Sample order is reshuffled
/// every epoch from `config.seed`; starting weights come from `init` or a
/// seeded initialization.
pub fn train<T: Real>(
    train_set: &[LabeledImage<T>],
    val_set: &[LabeledImage<T>],
    config: &ClassifierConfig,
    init: Option<ClassifierParams<T>>,
) -> Result<(ClassifierParams<T>, TrainHistory)> {
    config.validate()?;
    for class in CropClass::ALL {
        if !train_set.iter().any(|e| e.label == class) {
            return Err(invalid!("training set has no `{class}` images; both classes are required"));
        }
    }
    let mut params = init.unwrap_or_else(|| ClassifierParams::init(config, config.seed));
    let mut flat = params.to_model_params();
    let mut state = AdamState::for_params(&flat);
    let adam = AdamConfig::with_lr(config.lr);
    let mut rng = SplitMix64::new(config.seed ^ 0x5EED_C1A5);
    let mut step = 0u64;

    let mut history = TrainHistory::default();
    let eval_val = |p: &ClassifierParams<T>| -> Result<(Option<f64>, Option<f64>)> {
        if val_set.is_empty() {
            return Ok((None, None));
        }
        let (l, a) = loss_and_accuracy(val_set, config, p)?;
        Ok((Some(l), Some(a)))
    };
    let (train_loss, train_acc) = loss_and_accuracy(train_set, config, &params)?;
    let (val_loss, val_acc) = eval_val(&params)?;
    history.epochs.push(EpochStats {
        epoch: 0,
        train_loss,
        train_acc,
        val_loss,
        val_acc,
    });

    let n = train_set.len();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        // per-sample values are stored by index so the epoch mean does not depend on order
        let mut losses = vec![0.0; n];
        let mut hits = vec![false; n];
        for batch in order.chunks(config.batch_size) {
            let mut grad_sum = flat.zeros_like();
            for &i in batch {
                let ex = &train_set[i];
                let (loss, logits, grads) = loss_and_grad(&ex.input, ex.label, config, &params)?;
                losses[i] = loss.as_f64();
                hits[i] = Prediction::from_logits(&logits)?.label == ex.label;
                grad_sum = grad_sum.add_scaled(&grads.to_model_params(), T::one())?;
            }
            let grads = grad_sum.scale(T::one() / T::lit(batch.len() as f64));
            step += 1;
            let (next, next_state) = adam_step(&flat, &grads, &state, &adam, step)?;
            flat = next;
            state = next_state;
            params = ClassifierParams::from_model_params(&flat, config)?;
        }
        if !flat.all_finite() {
            return Err(crate::Error::NonFinite(format!("classifier weights after epoch {epoch}")));
        }
        let (val_loss, val_acc) = eval_val(&params)?;
        history.epochs.push(EpochStats {
            epoch,
            train_loss: losses.iter().sum::<f64>() / n as f64,
            train_acc: hits.iter().filter(|&&h| h).count() as f64 / n as f64,
            val_loss,
            val_acc,
        });
    }
    Ok((params, history))
}
