mod common;

use canecov_core::coverage::{coverage_report, map_threshold, segment};
use canecov_core::image_io::{
    resize, split_dataset, to_grayscale, ClassListing, ImageBuffer,
};
use canecov_core::metrics::psnr;
use canecov_core::optim::{adam_step, AdamConfig, AdamState, ModelParams};
use canecov_core::spectral::power_iteration_sigma;
use canecov_core::synth::{generate_field, FieldSpec};
use canecov_core::tensor::{conv2d, pixel_shuffle, pixel_unshuffle, softmax, Conv2DSpec, Tensor};
use common::naive_conv;
use proptest::prelude::*;

fn tensor_strategy(shape: Vec<usize>) -> impl Strategy<Value = Tensor<f64>> {
    let n: usize = shape.iter().product();
    prop::collection::vec(-1.0f64..1.0, n).prop_map(move |v| Tensor::new(&shape, v).unwrap())
}

fn image_strategy(max_side: usize, channels: usize) -> impl Strategy<Value = ImageBuffer> {
    (1..=max_side, 1..=max_side).prop_flat_map(move |(w, h)| {
        prop::collection::vec(any::<u8>(), w * h * channels)
            .prop_map(move |px| ImageBuffer::new(w, h, channels, px).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn unshuffle_round_trip(r in prop::sample::select(vec![1usize, 2, 4]), c in 1usize..4, bh in 1usize..4, bw in 1usize..4, seed in any::<u64>()) {
        let shape = [c, bh * r, bw * r];
        let n: usize = shape.iter().product();
        let t = Tensor::new(&shape, common::lcg_values(seed, n)).unwrap();
        let u = pixel_unshuffle(&t, r).unwrap();
        prop_assert_eq!(u.shape(), &[c * r * r, bh, bw][..]);
        prop_assert_eq!(pixel_shuffle(&u, r).unwrap(), t);
    }

    #[test]
    fn conv_matches_naive(
        ci in 1usize..4, co in 1usize..4, h in 1usize..7, w in 1usize..7,
        k in prop::sample::select(vec![1usize, 3, 5]), stride in 1usize..3, pad in 0usize..3, seed in any::<u64>()
    ) {
        prop_assume!(h + 2 * pad >= k && w + 2 * pad >= k);
        let input = common::lcg_values(seed, ci * h * w);
        let weight = common::lcg_values(seed ^ 1, co * ci * k * k);
        let bias = common::lcg_values(seed ^ 2, co);
        let spec = Conv2DSpec::new(
            Tensor::new(&[co, ci, k, k], weight.clone()).unwrap(),
            Tensor::new(&[co], bias.clone()).unwrap(),
            stride,
            pad,
        ).unwrap();
        let got = conv2d(&Tensor::new(&[ci, h, w], input.clone()).unwrap(), &spec).unwrap();
        let (want, oh, ow) = naive_conv(&input, (ci, h, w), &weight, &bias, k, stride, pad);
        prop_assert_eq!(got.shape(), &[co, oh, ow][..]);
        for (a, b) in got.data().iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn softmax_sums_to_one_and_ignores_shift(logits in prop::collection::vec(-30.0f64..30.0, 2..8), shift in -100.0f64..100.0) {
        let t = Tensor::new(&[logits.len()], logits.clone()).unwrap();
        let p = softmax(&t).unwrap();
        prop_assert!((p.sum() - 1.0).abs() <= 1e-12);
        let q = softmax(&t.map(|v| v + shift)).unwrap();
        for (a, b) in p.data().iter().zip(q.data()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn adam_with_zero_lr_is_identity(values in prop::collection::vec(-5.0f64..5.0, 1..20), grads in prop::collection::vec(-5.0f64..5.0, 20)) {
        let n = values.len();
        let mut p = ModelParams::new();
        p.push("w", Tensor::new(&[n], values).unwrap());
        let mut g = ModelParams::new();
        g.push("w", Tensor::new(&[n], grads[..n].to_vec()).unwrap());
        let state = AdamState::for_params(&p);
        let (next, _) = adam_step(&p, &g, &state, &AdamConfig::with_lr(0.0), 1).unwrap();
        prop_assert_eq!(next, p);
    }

    #[test]
    fn sigma_is_scale_equivariant(a in tensor_strategy(vec![5, 4]), c in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0]) {
        let s = power_iteration_sigma(&a, 50).unwrap();
        let sc = power_iteration_sigma(&a.scale(c), 50).unwrap();
        prop_assert!((sc - c.abs() * s).abs() <= 1e-9 * (c.abs() * s).max(1e-300));
    }

    #[test]
    fn split_counts_are_exact(n in 1usize..1000, seed in any::<u64>()) {
        let files: Vec<String> = (0..n).map(|i| format!("img_{i:04}.png")).collect();
        let split = split_dataset(&[ClassListing::new("c", files.clone())], 0.8, seed).unwrap();
        let class = &split.classes[0];
        let expected = ((0.8 * n as f64) + 0.5).floor() as usize;
        prop_assert_eq!(class.train.len(), expected);
        prop_assert_eq!(class.test.len(), n - expected);
        let mut all: Vec<String> = class.train.iter().chain(&class.test).cloned().collect();
        all.sort();
        prop_assert_eq!(all, files);
    }

    #[test]
    fn grayscale_is_idempotent(img in image_strategy(12, 3)) {
        let g = to_grayscale(&img);
        prop_assert_eq!(to_grayscale(&g), g);
    }

    #[test]
    fn resize_properties(img in image_strategy(10, 3), ow in 1usize..20, oh in 1usize..20, value in any::<u8>()) {
        prop_assert_eq!(resize(&img, img.width(), img.height()).unwrap(), img.clone());
        let flat = ImageBuffer::filled(img.width(), img.height(), 3, value).unwrap();
        let out = resize(&flat, ow, oh).unwrap();
        prop_assert!(out.pixels().iter().all(|&p| p == value));
        prop_assert_eq!((out.width(), out.height()), (ow, oh));
    }

    #[test]
    fn psnr_symmetric_and_matches_naive(a in image_strategy(9, 3), seed in any::<u64>()) {
        let noise = common::lcg_values(seed, a.pixels().len());
        let b_px: Vec<u8> = a.pixels().iter().zip(&noise).map(|(&p, &r)| (p as f64 + 40.0 * r).clamp(0.0, 255.0) as u8).collect();
        let b = ImageBuffer::new(a.width(), a.height(), 3, b_px).unwrap();
        let ab = psnr(&a, &b).unwrap();
        let ba = psnr(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        let mut sum = 0.0;
        for (x, y) in a.pixels().iter().zip(b.pixels()) {
            let d = *x as f64 - *y as f64;
            sum += d * d;
        }
        let mse = sum / a.pixels().len() as f64;
        match ab.psnr_db.finite() {
            Some(db) => prop_assert!((db - 10.0 * (255.0f64 * 255.0 / mse).log10()).abs() < 1e-9),
            None => prop_assert_eq!(mse, 0.0),
        }
    }

    #[test]
    fn coverage_monotone_and_complementary(img in image_strategy(16, 3)) {
        let mut last = f64::INFINITY;
        for step in 0..=20 {
            let (r, mask) = coverage_report(&img, step as f64 * 0.5).unwrap();
            prop_assert!(r.depopulated_pct <= last);
            last = r.depopulated_pct;
            prop_assert_eq!(r.populated_pixels + r.depopulated_pixels, r.total_pixels);
            prop_assert_eq!(mask.count_set() as u64, r.depopulated_pixels);
            let pop: f64 = r.populated_pct_display().parse().unwrap();
            let dep: f64 = r.depopulated_pct_display().parse().unwrap();
            prop_assert_eq!(((pop + dep) * 100.0).round() as u64, 10_000);
        }
    }

    #[test]
    fn inversion_symmetry(img in image_strategy(16, 1), cut in any::<u8>()) {
        let inverted = ImageBuffer::new(img.width(), img.height(), 1, img.pixels().iter().map(|&g| 255 - g).collect()).unwrap();
        let count = segment(&inverted, cut).unwrap().count_set();
        let below = img.pixels().iter().filter(|&&g| g < 255 - cut).count();
        prop_assert_eq!(count, below);
    }
}

#[test]
fn sigma_matches_gram_iteration_oracle() {
    // largest eigenvalue of AᵀA by long power iteration from a different start
    for seed in 0..50u64 {
        let a = common::lcg_values(seed + 1000, 64);
        let mut gram = [[0.0f64; 8]; 8];
        for i in 0..8 {
            for j in 0..8 {
                gram[i][j] = (0..8).map(|r| a[r * 8 + i] * a[r * 8 + j]).sum();
            }
        }
        let mut v = common::lcg_values(seed + 5000, 8);
        let mut lambda = 0.0;
        for _ in 0..20_000 {
            let next: Vec<f64> = (0..8).map(|i| (0..8).map(|j| gram[i][j] * v[j]).sum()).collect();
            let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
            lambda = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v = next.into_iter().map(|x| x / norm).collect();
        }
        let oracle = lambda.sqrt();
        let est = power_iteration_sigma(&Tensor::new(&[8, 8], a).unwrap(), 50).unwrap();
        assert!((est - oracle).abs() <= 0.01 * oracle, "seed {seed}: {est} vs {oracle}");
    }
}

#[test]
fn mask_popcount_matches_counts_on_random_images() {
    for seed in 0..1000u64 {
        let v = common::lcg_values(seed, 64);
        let px: Vec<u8> = v.iter().map(|x| ((x + 1.0) * 127.5) as u8).collect();
        let img = ImageBuffer::new(8, 8, 1, px).unwrap();
        let user = (seed % 11) as f64;
        let (r, mask) = coverage_report(&img, user).unwrap();
        assert_eq!(mask.count_set() as u64, r.depopulated_pixels);
        let cut = map_threshold(user).unwrap();
        assert_eq!(r.depopulated_pixels as usize, img.pixels().iter().filter(|&&g| g > cut).count());
    }
}

#[test]
fn synthetic_masks_recount_exactly() {
    for seed in 0..20u64 {
        let spec = FieldSpec {
            width: 48,
            height: 40,
            gap_fraction_target: 0.05 + 0.025 * seed as f64,
            seed,
            ..Default::default()
        };
        let f = generate_field(&spec).unwrap();
        let recount = f.mask.bits().iter().filter(|&&b| b).count();
        assert_eq!(f.gap_fraction, recount as f64 / (48.0 * 40.0));
        assert!((f.gap_fraction - spec.gap_fraction_target).abs() <= 0.02);
    }
}
