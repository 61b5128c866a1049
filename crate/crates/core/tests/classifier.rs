mod common;

use canecov_core::classes::CropClass;
use canecov_core::classifier::*;
use canecov_core::image_io::normalize;
use canecov_core::metrics::ConfusionMatrix;
use canecov_core::optim::ModelParams;
use canecov_core::synth::{classification_field_spec, generate_field};
use canecov_core::tensor::Tensor;
use common::{gradient_check, lcg_values, leaky, naive_conv};

fn small_config() -> ClassifierConfig {
    ClassifierConfig {
        input_size: 16,
        ..Default::default()
    }
}

fn seeded_input(seed: u64, size: usize) -> Tensor<f64> {
    let v = lcg_values(seed, 3 * size * size).into_iter().map(|x| 0.5 + 0.5 * x).collect();
    Tensor::new(&[3, size, size], v).unwrap()
}

fn with_random_biases(p: &ClassifierParams<f64>, seed: u64) -> ClassifierParams<f64> {
    let mut q = p.clone();
    for (i, conv) in q.convs.iter_mut().enumerate() {
        let b = Tensor::new(conv.bias().shape(), lcg_values(seed + i as u64, conv.out_channels())).unwrap();
        *conv = conv.with_params(conv.weight().clone(), b.scale(0.1)).unwrap();
    }
    q.dense_bias = Tensor::new(&[2], vec![0.05, -0.05]).unwrap();
    q
}

fn reference_logits(x: &Tensor<f64>, p: &ClassifierParams<f64>, slope: f64) -> Vec<f64> {
    let (mut c, mut h, mut w) = x.dims3().unwrap();
    let mut data = x.data().to_vec();
    for conv in &p.convs {
        let (out, _, _) = naive_conv(&data, (c, h, w), conv.weight().data(), conv.bias().data(), 3, 1, 1);
        let act = leaky(&out, slope);
        c = conv.out_channels();
        let (ph, pw) = (h / 2, w / 2);
        let mut pooled = vec![f64::NEG_INFINITY; c * ph * pw];
        for ch in 0..c {
            for y in 0..ph {
                for xx in 0..pw {
                    for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let v = act[(ch * h + 2 * y + dy) * w + 2 * xx + dx];
                        let slot = &mut pooled[(ch * ph + y) * pw + xx];
                        *slot = slot.max(v);
                    }
                }
            }
        }
        data = pooled;
        h = ph;
        w = pw;
    }
    let feats: Vec<f64> = (0..c)
        .map(|ch| data[ch * h * w..(ch + 1) * h * w].iter().sum::<f64>() / (h * w) as f64)
        .collect();
    (0..2)
        .map(|k| {
            p.dense_bias.data()[k]
                + (0..c).map(|j| p.dense_weight.data()[k * c + j] * feats[j]).sum::<f64>()
        })
        .collect()
}

#[test]
fn forward_matches_straight_line_reference() {
    let cfg = ClassifierConfig { input_size: 32, ..Default::default() };
    let p = with_random_biases(&ClassifierParams::init(&cfg, 12), 3);
    let x = seeded_input(5, 32);
    let got = forward(&x, &cfg, &p).unwrap();
    let want = reference_logits(&x, &p, cfg.leaky_slope);
    for (a, b) in got.data().iter().zip(&want) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn default_network_accepts_224() {
    let cfg = ClassifierConfig::default();
    let p = ClassifierParams::<f32>::init(&cfg, 1);
    let logits = forward(&seeded_input(1, 224).cast::<f32>(), &cfg, &p).unwrap();
    assert_eq!(logits.shape(), &[2]);
    assert!(logits.all_finite());
}

#[test]
fn cross_entropy_gradient_check() {
    let cfg = small_config();
    // seed chosen so that no activation sits within the probe step of a kink
    let p = with_random_biases(&ClassifierParams::init(&cfg, 31), 7);
    let x = seeded_input(8, 16);
    for label in CropClass::ALL {
        let (_, _, grads) = loss_and_grad(&x, label, &cfg, &p).unwrap();
        let loss = |m: &ModelParams<f64>| {
            let q = ClassifierParams::from_model_params(m, &cfg).unwrap();
            cross_entropy(&forward(&x, &cfg, &q).unwrap(), label).unwrap().0
        };
        let (worst, at) = gradient_check(&p.to_model_params(), &grads.to_model_params(), 1e-5, loss);
        assert!(worst < 1e-4, "{label}: {worst} at {at}");
    }
}

fn field_set(n_per_class: usize, seed: u64, cfg: &ClassifierConfig) -> Vec<LabeledImage<f64>> {
    let mut out = Vec::new();
    for i in 0..n_per_class as u64 {
        for class in CropClass::ALL {
            let spec = classification_field_spec(class, 64, seed * 1000 + i * 2 + class.index() as u64);
            let field = generate_field(&spec).unwrap();
            out.push(LabeledImage {
                input: prepare_input(&field.image, cfg).unwrap(),
                label: class,
            });
        }
    }
    out
}

#[test]
fn zero_learning_rate_keeps_history_constant() {
    let cfg = ClassifierConfig { lr: 0.0, epochs: 3, batch_size: 4, ..small_config() };
    let train_set = field_set(5, 1, &cfg);
    let test_set = field_set(3, 2, &cfg);
    let (p, h) = train(&train_set, &test_set, &cfg, None).unwrap();
    assert_eq!(h.epochs.len(), 4);
    let first = h.epochs[0];
    for e in &h.epochs {
        assert_eq!(e.train_acc, first.train_acc);
        assert_eq!(e.val_acc, first.val_acc);
        assert_eq!(e.train_loss, first.train_loss);
        assert_eq!(e.val_loss, first.val_loss);
    }
    assert_eq!(p, ClassifierParams::init(&cfg, cfg.seed));
}

#[test]
fn training_is_deterministic_and_learns() {
    let cfg = ClassifierConfig {
        input_size: 32,
        epochs: 6,
        batch_size: 8,
        lr: 3e-3,
        ..Default::default()
    };
    let train_set = field_set(24, 3, &cfg);
    let test_set = field_set(8, 4, &cfg);
    let (a, ha) = train(&train_set, &test_set, &cfg, None).unwrap();
    let (b, hb) = train(&train_set, &test_set, &cfg, None).unwrap();
    assert_eq!(a, b);
    assert_eq!(ha, hb);
    let first = ha.initial().unwrap().train_loss;
    let last = ha.last().unwrap().train_loss;
    assert!(last < 0.5 * first, "{}", ha.to_csv());
}

#[test]
fn single_class_training_set_is_rejected() {
    let cfg = small_config();
    let only_poblada: Vec<_> = field_set(3, 1, &cfg)
        .into_iter()
        .filter(|e| e.label == CropClass::Poblada)
        .collect();
    let err = train(&only_poblada, &[], &cfg, None).unwrap_err();
    assert!(err.to_string().contains("despoblada"), "{err}");
}

#[test]
fn history_csv_layout() {
    let cfg = ClassifierConfig { epochs: 1, batch_size: 4, ..small_config() };
    let (_, h) = train(&field_set(2, 1, &cfg), &field_set(1, 2, &cfg), &cfg, None).unwrap();
    let csv = h.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "epoch,train_loss,train_acc,val_loss,val_acc");
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("1,"));
}

#[test]
fn constant_predictor_fills_one_column() {
    let cfg = small_config();
    let mut p = ClassifierParams::<f64>::zeros(&cfg);
    p.dense_bias = Tensor::new(&[2], vec![-1.0, 1.0]).unwrap();
    let test_set = field_set(6, 9, &cfg);
    let m = evaluate(&test_set, &cfg, &p).unwrap();
    assert_eq!(m.total(), 12);
    assert_eq!(m.column_total(CropClass::Despoblada), 12);
    assert_eq!(m.column_total(CropClass::Poblada), 0);
    assert_eq!(m.accuracy(), Some(0.5));
    for class in CropClass::ALL {
        assert_eq!(m.row_total(class), 6);
    }
}

#[test]
fn perfect_predictor_is_diagonal() {
    let pairs = CropClass::ALL
        .iter()
        .flat_map(|&c| std::iter::repeat_n((c, c), 160));
    let m = ConfusionMatrix::from_pairs(pairs);
    assert_eq!(m.counts, [[160, 0], [0, 160]]);
    assert_eq!(m.accuracy(), Some(1.0));
}

#[test]
fn predict_handles_grayscale_and_is_stable() {
    let cfg = small_config();
    let p = ClassifierParams::<f64>::init(&cfg, 2);
    let field = generate_field(&classification_field_spec(CropClass::Despoblada, 48, 1)).unwrap();
    let gray = canecov_core::image_io::to_grayscale(&field.image);
    let a = predict(&gray, &cfg, &p).unwrap();
    let b = predict(&gray, &cfg, &p).unwrap();
    assert_eq!(a, b);
    assert!((a.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    let replicated = normalize::<f64>(&gray.to_rgb());
    assert_eq!(replicated.shape()[0], 3);
}
