//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fail.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use canecov_core::classes::CropClass;
use canecov_core::classifier::{self, load_split_images, ClassifierConfig, ClassifierParams};
use canecov_core::coverage::coverage_report;
use canecov_core::image_io::{list_dataset, save_image, split_dataset, ClassListing, ImageBuffer};
use canecov_core::metrics::psnr;
use canecov_core::optim::ModelParams;
use canecov_core::spectral::power_iteration_sigma;
use canecov_core::superres::*;
use canecov_core::synth::{generate_classification_dataset, generate_field, FieldSpec};
use canecov_core::tensor::{nearest_upsample, pixel_shuffle, pixel_unshuffle, Tensor};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($fmt)+));
        }
    };
}

fn lcg(seed: u64, n: usize) -> Vec<f64> {
    let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xD1B5_4A32_D192_ED03;
    (0..n)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .collect()
}

fn random_image(seed: u64, w: usize, h: usize, channels: usize) -> ImageBuffer {
    let px = lcg(seed, w * h * channels).iter().map(|v| ((v + 1.0) * 127.999) as u8).collect();
    ImageBuffer::new(w, h, channels, px).unwrap()
}

fn psnr_exactness() -> Outcome {
    let black = ImageBuffer::filled(16, 16, 3, 0).unwrap();
    let white = ImageBuffer::filled(16, 16, 3, 255).unwrap();
    let one = ImageBuffer::filled(16, 16, 3, 1).unwrap();
    let max_err = psnr(&black, &white).unwrap().psnr_db.finite().unwrap();
    ensure!(max_err.abs() <= 1e-6, "max error gives {max_err} dB");
    let unit = psnr(&black, &one).unwrap().psnr_db.finite().unwrap();
    ensure!((unit - 48.1308).abs() <= 1e-4 && (unit - 20.0 * 255f64.log10()).abs() <= 1e-6, "unit error gives {unit} dB");
    for seed in 0..100 {
        let a = random_image(seed, 13, 9, 3);
        let b = random_image(seed + 1000, 13, 9, 3);
        let ab = psnr(&a, &b).unwrap();
        ensure!(ab == psnr(&b, &a).unwrap(), "asymmetric on pair {seed}");
        let mut sum = 0.0;
        for i in 0..a.pixels().len() {
            let d = a.pixels()[i] as f64 - b.pixels()[i] as f64;
            sum += d * d;
        }
        let naive = 10.0 * (255.0 * 255.0 / (sum / a.pixels().len() as f64)).log10();
        let got = ab.psnr_db.finite().unwrap();
        ensure!((got - naive).abs() <= 1e-9, "pair {seed}: {got} vs naive {naive}");
    }
    Ok(format!("max error {max_err:.6} dB, unit error {unit:.6} dB, 100 pairs"))
}

fn unshuffle_lossless() -> Outcome {
    let mut n = 0;
    for r in [1usize, 2, 4] {
        for seed in 0..100u64 {
            let (c, bh, bw) = (1 + seed as usize % 3, 1 + seed as usize % 4, 1 + (seed as usize / 4) % 3);
            let shape = [c, bh * r, bw * r];
            let t = Tensor::new(&shape, lcg(seed * 7 + r as u64, shape.iter().product())).unwrap();
            let back = pixel_shuffle(&pixel_unshuffle(&t, r).unwrap(), r).unwrap();
            ensure!(back == t, "r={r} seed {seed} not exact");
            n += 1;
        }
    }
    Ok(format!("{n} round trips exact"))
}

const SHAPES: [(usize, usize); 20] = [
    (4, 4), (4, 8), (8, 4), (8, 8), (12, 4), (4, 12), (12, 12), (16, 8), (8, 16), (16, 16),
    (20, 4), (4, 20), (20, 12), (24, 8), (8, 24), (24, 24), (28, 4), (32, 8), (12, 32), (32, 32),
];

fn generator_shape_law() -> Outcome {
    for s in [1usize, 2, 4] {
        let cfg = GeneratorConfig { out_scale: s, ..Default::default() };
        let g = GeneratorParams::<f64>::init(&cfg, s as u64);
        for (i, &(h, w)) in SHAPES.iter().enumerate() {
            let x = Tensor::new(&[3, h, w], lcg(i as u64, 3 * h * w)).unwrap();
            let out = generator_forward(&x, &cfg, &g).map_err(|e| e.to_string())?;
            ensure!(out.shape() == [3, s * h, s * w], "x{s} on {h}x{w} gave {:?}", out.shape());
        }
    }
    Ok("x1, x2, x4 over 20 sizes".into())
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn worst_gradient_error(
    params: &ModelParams<f64>,
    analytic: &ModelParams<f64>,
    loss: impl Fn(&ModelParams<f64>) -> f64,
) -> (f64, usize) {
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut count = 0;
    for (name, base) in params.iter() {
        let grad = analytic.get(name).unwrap();
        for i in 0..base.len() {
            let eval = |delta: f64| {
                let mut data = base.data().to_vec();
                data[i] += delta;
                let mut p = ModelParams::new();
                for (n, t) in params.iter() {
                    p.push(n, if n == name { Tensor::new(base.shape(), data.clone()).unwrap() } else { t.clone() });
                }
                loss(&p)
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            worst = worst.max(rel_err(grad.data()[i], numeric));
            count += 1;
        }
    }
    (worst, count)
}

fn gradient_checks() -> Outcome {
    let mut report = Vec::new();
    for s in [1usize, 2, 3, 4] {
        let cfg = GeneratorConfig {
            num_features: 4,
            num_rrdb: 1,
            growth_channels: 2,
            out_scale: s,
            ..Default::default()
        };
        let g = GeneratorParams::<f64>::init(&cfg, 60 + s as u64);
        let x = Tensor::new(&[3, 4, 4], lcg(s as u64, 48).iter().map(|v| 0.5 + 0.5 * v).collect()).unwrap();
        let out = generator_forward(&x, &cfg, &g).unwrap();
        let offsets = lcg(99, out.len());
        let target = Tensor::new(
            out.shape(),
            out.data().iter().zip(&offsets).map(|(o, r)| o + 0.25 * r.signum() + 0.25 * r).collect(),
        )
        .unwrap();
        let (_, grads) = generator_l1_grad(&x, &target, &cfg, &g).unwrap();
        let (worst, n) = worst_gradient_error(&g.to_model_params(), &grads.to_model_params(), |p| {
            let gp = GeneratorParams::from_model_params(p, &cfg).unwrap();
            l1_loss(&generator_forward(&x, &cfg, &gp).unwrap(), &target).unwrap().0
        });
        ensure!(worst < 1e-4, "generator x{s}: worst relative error {worst:e}");
        report.push(format!("generator x{s} {n} params {worst:.1e}"));
    }

    let cfg = ClassifierConfig { input_size: 16, ..Default::default() };
    let mut p = ClassifierParams::<f64>::init(&cfg, 31);
    for (i, conv) in p.convs.iter_mut().enumerate() {
        let b = Tensor::new(conv.bias().shape(), lcg(7 + i as u64, conv.out_channels())).unwrap().scale(0.1);
        *conv = conv.with_params(conv.weight().clone(), b).unwrap();
    }
    let x = Tensor::new(&[3, 16, 16], lcg(8, 768).iter().map(|v| 0.5 + 0.5 * v).collect()).unwrap();
    for label in CropClass::ALL {
        let (_, _, grads) = classifier::loss_and_grad(&x, label, &cfg, &p).unwrap();
        let (worst, n) = worst_gradient_error(&p.to_model_params(), &grads.to_model_params(), |m| {
            let q = ClassifierParams::from_model_params(m, &cfg).unwrap();
            classifier::cross_entropy(&classifier::forward(&x, &cfg, &q).unwrap(), label).unwrap().0
        });
        ensure!(worst < 1e-4, "classifier ({label}): worst relative error {worst:e}");
        report.push(format!("classifier/{label} {n} params {worst:.1e}"));
    }
    Ok(report.join(", "))
}

fn spectral_norm_invariance() -> Outcome {
    let cfg = DiscriminatorConfig::default();
    let d = DiscriminatorParams::<f64>::init(&cfg, 8);
    let x = Tensor::new(&[3, 16, 16], lcg(6, 768)).unwrap();
    let base = discriminator_forward(&x, &cfg, &d).unwrap();
    ensure!(base.shape() == [1, 16, 16], "output shape {:?}", base.shape());
    let mut worst = 0.0f64;
    for c in [0.1, 10.0] {
        for which in 0..d.convs().len() {
            let mut scaled = d.clone();
            let conv = scaled.convs()[which].clone();
            *scaled.convs_mut()[which] = conv.with_params(conv.weight().scale(c), conv.bias().clone()).unwrap();
            let out = discriminator_forward(&x, &cfg, &scaled).unwrap();
            for (a, b) in out.data().iter().zip(base.data()) {
                worst = worst.max((a - b).abs() / b.abs().max(1e-12));
            }
        }
    }
    ensure!(worst < 1e-3, "discriminator output moved by {worst:e} relative");

    let mut worst_sigma = 0.0f64;
    for seed in 0..50u64 {
        let a = lcg(seed + 1000, 64);
        let mut gram = [[0.0f64; 8]; 8];
        for i in 0..8 {
            for j in 0..8 {
                gram[i][j] = (0..8).map(|r| a[r * 8 + i] * a[r * 8 + j]).sum();
            }
        }
        let mut v = lcg(seed + 5000, 8);
        let mut lambda = 0.0;
        for _ in 0..20_000 {
            let next: Vec<f64> = (0..8).map(|i| (0..8).map(|j| gram[i][j] * v[j]).sum()).collect();
            let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
            lambda = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v = next.into_iter().map(|x| x / norm).collect();
        }
        let oracle = lambda.sqrt();
        let est = power_iteration_sigma(&Tensor::new(&[8, 8], a).unwrap(), 50).unwrap();
        worst_sigma = worst_sigma.max((est - oracle).abs() / oracle);
    }
    ensure!(worst_sigma <= 0.01, "sigma off by {:.3}% from the oracle", 100.0 * worst_sigma);
    Ok(format!("output drift {worst:.1e}, sigma error {:.2e} over 50 matrices", worst_sigma))
}

fn files(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}_{i:04}.png")).collect()
}

fn split_exactness() -> Outcome {
    let one = split_dataset(&[ClassListing::new("tiles", files("t", 650))], 0.8, 1).unwrap();
    ensure!(one.train_len() == 520 && one.test_len() == 130, "650 gave {}/{}", one.train_len(), one.test_len());
    let listing = [
        ClassListing::new("zonas_despobladas", files("d", 800)),
        ClassListing::new("zonas_pobladas", files("p", 800)),
    ];
    let two = split_dataset(&listing, 0.8, 1).unwrap();
    for c in &two.classes {
        ensure!(c.train.len() == 640 && c.test.len() == 160, "{}: {}/{}", c.name, c.train.len(), c.test.len());
        ensure!(c.train.iter().all(|f| !c.test.contains(f)), "{} overlaps", c.name);
    }
    ensure!(two.to_json() == split_dataset(&listing, 0.8, 1).unwrap().to_json(), "not deterministic");
    for n in 1..1000usize {
        let s = split_dataset(&[ClassListing::new("c", files("f", n))], 0.8, n as u64).unwrap();
        let c = &s.classes[0];
        let expect = (0.8 * n as f64 + 0.5).floor() as usize;
        ensure!(c.train.len() == expect && c.test.len() == n - expect, "N={n}: {}/{}", c.train.len(), c.test.len());
        let mut all: Vec<&String> = c.train.iter().chain(&c.test).collect();
        all.sort();
        all.dedup();
        ensure!(all.len() == n, "N={n}: lists are not a partition");
    }
    Ok("650 -> 520/130, 800+800 -> 640/160 each, N in 1..1000 exact".into())
}

struct Scratch {
    dir: tempfile::TempDir,
}

impl Scratch {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn classifier_smoke(scratch: &Scratch) -> Outcome {
    let data = scratch.path("fields");
    generate_classification_dataset(250, 2024, &data, 224).map_err(|e| e.to_string())?;
    let split = split_dataset(&list_dataset(&data).unwrap(), 0.8, 3).unwrap();
    for c in &split.classes {
        ensure!(c.train.len() == 200 && c.test.len() == 50, "{}: {}/{}", c.name, c.train.len(), c.test.len());
    }
    let cfg = ClassifierConfig { seed: 11, ..Default::default() };
    ensure!(cfg.batch_size == 32 && cfg.lr == 0.001 && cfg.epochs == 5, "defaults changed");
    let (train_set, test_set) = load_split_images::<f32>(&data, &split, &cfg).map_err(|e| e.to_string())?;
    let (params, history) = classifier::train(&train_set, &test_set, &cfg, None).map_err(|e| e.to_string())?;
    let m = classifier::evaluate(&test_set, &cfg, &params).unwrap();
    let acc = m.accuracy().unwrap();
    ensure!(acc >= 0.95, "test accuracy {acc}\n{}", history.to_csv());
    let first = history.initial().unwrap().train_loss;
    let last = history.last().unwrap().train_loss;
    ensure!(last < 0.5 * first, "train loss {first} -> {last}");

    let (again, history2) = classifier::train(&train_set, &test_set, &cfg, None).map_err(|e| e.to_string())?;
    ensure!(again == params && history2 == history, "second run differs");

    let probe = generate_field(&FieldSpec { width: 224, height: 224, gap_fraction_target: 0.3, seed: 77, ..Default::default() })
        .unwrap();
    let pred = classifier::predict(&probe.image, &cfg, &params).unwrap();
    ensure!(
        pred.label == CropClass::Despoblada && pred.probability(CropClass::Despoblada) > 0.5,
        "depopulated probe predicted {pred:?}"
    );
    params.save(scratch.path("classifier.cccl"), &cfg).map_err(|e| e.to_string())?;
    Ok(format!("test accuracy {acc:.4}, train loss {first:.3} -> {last:.3}, reproducible"))
}

fn sr_smoke() -> Outcome {
    let pairs: Vec<_> = (0..4usize)
        .map(|k| {
            let lr = Tensor::from_fn(&[3, 8, 8], |i| {
                let (c, y, x) = (i / 64, (i / 8) % 8, i % 8);
                0.15 + 0.7 * ((x + 2 * y + 3 * c + k) % 5) as f64 / 4.0
            });
            let hr = nearest_upsample(&lr, 4).unwrap();
            (lr, hr)
        })
        .collect();
    let hyper = SrTrainConfig { batch_size: 2, epochs: 100, lr: 2e-3, seed: 5 };
    let (_, h) = train_generator_l1(&pairs, &GeneratorConfig::default(), &hyper, None).map_err(|e| e.to_string())?;
    ensure!(h.steps == 200, "{} steps", h.steps);
    let first = h.losses[0];
    let last = *h.losses.last().unwrap();
    ensure!(last < 0.5 * first, "L1 {first} -> {last}");
    Ok(format!("L1 {first:.4} -> {last:.4} in {} steps", h.steps))
}

fn coverage_oracle() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..50u64 {
        let gap = 0.05 + 0.55 * i as f64 / 49.0;
        let spec = FieldSpec { gap_fraction_target: gap, seed: 500 + i, ..Default::default() };
        let field = generate_field(&spec).map_err(|e| e.to_string())?;
        let (r, mask) = coverage_report(&field.image, spec.ideal_user_threshold()).unwrap();
        let err = (r.depopulated_pct - 100.0 * field.gap_fraction).abs();
        worst = worst.max(err);
        ensure!(err <= 2.0, "field {i}: {} vs truth {}", r.depopulated_pct, 100.0 * field.gap_fraction);
        ensure!(mask.count_set() as u64 == r.depopulated_pixels, "mask count mismatch");
        let mut last = f64::INFINITY;
        for step in 0..=20 {
            let (r, _) = coverage_report(&field.image, step as f64 * 0.5).unwrap();
            ensure!(r.depopulated_pct <= last, "field {i}: not monotone at {}", step as f64 * 0.5);
            last = r.depopulated_pct;
            let pop: f64 = r.populated_pct_display().parse().unwrap();
            let dep: f64 = r.depopulated_pct_display().parse().unwrap();
            ensure!(((pop + dep) * 100.0).round() as i64 == 10_000, "field {i}: {pop} + {dep}");
            ensure!(r.populated_pixels + r.depopulated_pixels == r.total_pixels, "counts do not add up");
        }
    }
    Ok(format!("50 fields, worst error {worst:.3} points"))
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_canecov")
}

fn run_cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(bin()).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8(out.stdout).unwrap().trim_end().to_owned())
}

fn json_field<'a>(json: &'a str, key: &str) -> Option<&'a str> {
    let start = json.find(&format!("\"{key}\":"))? + key.len() + 3;
    let rest = &json[start..];
    let end = rest.find([',', '}']).unwrap_or(rest.len());
    Some(&rest[..end])
}

fn end_to_end_pipeline(scratch: &Scratch) -> Outcome {
    let model = scratch.path("classifier.cccl");
    ensure!(model.exists(), "classifier model missing (classifier smoke training must pass first)");
    let model = model.to_str().unwrap();

    let gapped = FieldSpec { width: 224, height: 224, gap_fraction_target: 0.25, seed: 31, ..Default::default() };
    let field = generate_field(&gapped).unwrap();
    let path = scratch.path("gap25.png");
    save_image(&field.image, &path).unwrap();
    let threshold = format!("{:.2}", gapped.ideal_user_threshold());
    let out = run_cli(&["--json", "pipeline", path.to_str().unwrap(), "--classifier-model", model, "--threshold", &threshold])?;
    ensure!(json_field(&out, "label") == Some("\"despoblada\""), "gapped field: {out}");
    let pct: f64 = json_field(&out, "depopulated_pct").unwrap().parse().unwrap();
    ensure!((pct - 25.0).abs() <= 3.0, "depopulated {pct}% vs 25%");
    let again = run_cli(&["--json", "pipeline", path.to_str().unwrap(), "--classifier-model", model, "--threshold", &threshold])?;
    ensure!(again == out, "pipeline output not byte-identical across runs");

    let full = FieldSpec { width: 224, height: 224, gap_fraction_target: 0.0, seed: 32, ..Default::default() };
    let path = scratch.path("full.png");
    save_image(&generate_field(&full).unwrap().image, &path).unwrap();
    let out = run_cli(&["--json", "pipeline", path.to_str().unwrap(), "--classifier-model", model])?;
    ensure!(json_field(&out, "label") == Some("\"poblada\""), "populated field: {out}");
    ensure!(json_field(&out, "coverage_skipped") == Some("true"), "coverage ran: {out}");
    ensure!(json_field(&out, "populated_pct") == Some("100.00"), "populated share: {out}");
    Ok(format!("gapped field -> despoblada at {pct:.2}% (truth {:.2}%), full field -> poblada, skipped", 100.0 * field.gap_fraction))
}

struct Server {
    child: Child,
    addr: String,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn start_server(images: &Path) -> Result<Server, String> {
    let mut child = Command::new(bin())
        .args(["serve", "--port", "0", "--images", images.to_str().unwrap()])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| e.to_string())?;
    let mut stdout = child.stdout.take().unwrap();
    let mut line = Vec::new();
    let mut byte = [0u8; 1];
    while stdout.read(&mut byte).map_err(|e| e.to_string())? == 1 && byte[0] != b'\n' {
        line.push(byte[0]);
    }
    let line = String::from_utf8(line).unwrap();
    let addr = line
        .strip_prefix("listening on http://")
        .ok_or_else(|| format!("unexpected startup line `{line}`"))?
        .to_owned();
    Ok(Server { child, addr })
}

fn http(addr: &str, method: &str, path: &str, body: &[u8]) -> Result<(u16, String), String> {
    let mut s = TcpStream::connect(addr).map_err(|e| e.to_string())?;
    s.set_read_timeout(Some(Duration::from_secs(30))).unwrap();
    let head = format!(
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    );
    s.write_all(head.as_bytes()).and_then(|_| s.write_all(body)).map_err(|e| e.to_string())?;
    let mut raw = Vec::new();
    s.read_to_end(&mut raw).map_err(|e| e.to_string())?;
    let text = String::from_utf8_lossy(&raw).into_owned();
    let status = text.split_whitespace().nth(1).and_then(|c| c.parse().ok()).unwrap_or(0);
    let body = text.split_once("\r\n\r\n").map(|(_, b)| b.to_owned()).unwrap_or_default();
    Ok((status, body))
}

fn strip_mask(json: &str) -> String {
    match json.find(",\"mask_png\":") {
        Some(i) => format!("{}}}", &json[..i]),
        None => json.to_owned(),
    }
}

fn cli_serve_equivalence(scratch: &Scratch) -> Outcome {
    let gallery = scratch.path("gallery");
    std::fs::create_dir_all(&gallery).unwrap();
    let checker = ImageBuffer::from_fn(64, 64, 1, |x, y, _| if (x / 8 + y / 8) % 2 == 0 { 0 } else { 255 }).unwrap();
    save_image(&checker, gallery.join("checkerboard.png")).unwrap();
    for i in 0..3u64 {
        let spec = FieldSpec { gap_fraction_target: 0.1 + 0.2 * i as f64, seed: 900 + i, ..Default::default() };
        save_image(&generate_field(&spec).unwrap().image, gallery.join(format!("field{i}.png"))).unwrap();
    }
    save_image(&random_image(5, 40, 30, 3), gallery.join("noise.png")).unwrap();

    let server = start_server(&gallery)?;
    let (status, health) = http(&server.addr, "GET", "/health", b"")?;
    ensure!(status == 200 && health == "{\"status\":\"ok\"}", "health: {status} {health}");

    let ids = ["checkerboard", "field0", "field1", "field2", "noise"];
    let thresholds = ["0", "2.5", "5", "7.3", "10"];
    let mut n = 0;
    for (i, id) in ids.iter().enumerate() {
        for t in thresholds.iter().skip(i % 2).step_by(1).take(4) {
            let cli = run_cli(&["--json", "coverage", gallery.join(format!("{id}.png")).to_str().unwrap(), "--threshold", t])?;
            let (status, body) = http(&server.addr, "POST", "/coverage", format!("{{\"id\":\"{id}\",\"threshold\":{t}}}").as_bytes())?;
            ensure!(status == 200, "{id}@{t}: HTTP {status} {body}");
            ensure!(body.contains("\"mask_png\":\""), "{id}@{t}: no mask");
            ensure!(strip_mask(&body) == cli, "{id}@{t}:\n cli   {cli}\n serve {}", strip_mask(&body));
            if *id == "checkerboard" && *t == "5" {
                ensure!(cli.contains("\"populated_pct\":50.00,\"depopulated_pct\":50.00"), "checkerboard: {cli}");
            }
            n += 1;
        }
    }
    ensure!(n == 20, "{n} pairs compared");
    Ok(format!("{n} (image, threshold) pairs byte-identical"))
}

fn main() {
    let scratch = Scratch { dir: tempfile::tempdir().expect("temp dir") };
    type Check<'a> = (&'a str, Box<dyn Fn() -> Outcome + 'a>);
    let checks: Vec<Check> = vec![
        ("psnr exactness", Box::new(psnr_exactness)),
        ("pixel-unshuffle losslessness", Box::new(unshuffle_lossless)),
        ("generator shape law", Box::new(generator_shape_law)),
        ("gradient checks", Box::new(gradient_checks)),
        ("spectral-norm invariance", Box::new(spectral_norm_invariance)),
        ("split exactness", Box::new(split_exactness)),
        ("classifier smoke training", Box::new(|| classifier_smoke(&scratch))),
        ("super-resolution smoke training", Box::new(sr_smoke)),
        ("coverage oracle equivalence", Box::new(coverage_oracle)),
        ("end-to-end pipeline", Box::new(|| end_to_end_pipeline(&scratch))),
        ("cli/serve equivalence", Box::new(|| cli_serve_equivalence(&scratch))),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in &checks {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name} [{secs:.1}s] {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name} [{secs:.1}s] {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
