#![allow(dead_code)]

use canecov_core::optim::ModelParams;
use canecov_core::tensor::Tensor;

/// Plain nested-loop cross-correlation over a `c×h×w` slice.
pub fn naive_conv(
    input: &[f64],
    (c, h, w): (usize, usize, usize),
    weight: &[f64],
    bias: &[f64],
    k: usize,
    stride: usize,
    pad: usize,
) -> (Vec<f64>, usize, usize) {
    let oc = bias.len();
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; oc * oh * ow];
    for o in 0..oc {
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = bias[o];
                for i in 0..c {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (y * stride + ky) as isize - pad as isize;
                            let ix = (x * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            acc += weight[((o * c + i) * k + ky) * k + kx]
                                * input[(i * h + iy as usize) * w + ix as usize];
                        }
                    }
                }
                out[(o * oh + y) * ow + x] = acc;
            }
        }
    }
    (out, oh, ow)
}

pub fn leaky(v: &[f64], slope: f64) -> Vec<f64> {
    v.iter().map(|&x| if x > 0.0 { x } else { slope * x }).collect()
}

/// Deterministic pseudo-random values in [-1, 1).
pub fn lcg_values(seed: u64, n: usize) -> Vec<f64> {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..n)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .collect()
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Compares `analytic` against central differences of `loss` for every value
/// of every parameter. Returns the worst relative error and where it occurred.
pub fn gradient_check(
    params: &ModelParams<f64>,
    analytic: &ModelParams<f64>,
    h: f64,
    loss: impl Fn(&ModelParams<f64>) -> f64,
) -> (f64, String) {
    let mut worst = (0.0, String::new());
    let names: Vec<String> = params.iter().map(|(n, _)| n.to_string()).collect();
    for name in &names {
        let base = params.get(name).unwrap();
        let grad = analytic.get(name).unwrap();
        for i in 0..base.len() {
            let shifted = |delta: f64| {
                let mut data = base.data().to_vec();
                data[i] += delta;
                let t = Tensor::new(base.shape(), data).unwrap();
                let mut p = ModelParams::new();
                for (n, v) in params.iter() {
                    p.push(n, if n == name { t.clone() } else { v.clone() });
                }
                loss(&p)
            };
            let numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
            let e = rel_err(grad.data()[i], numeric);
            if e > worst.0 {
                worst = (e, format!("{name}[{i}] analytic {} numeric {numeric}", grad.data()[i]));
            }
        }
    }
    worst
}
