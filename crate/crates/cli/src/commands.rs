use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use canecov_core::classifier::{self, load_split_images, ClassifierConfig, ClassifierParams};
use canecov_core::coverage::{coverage_report, pseudocolor};
use canecov_core::image_io::{
    list_dataset, load_image, normalize, resize, save_image, split_dataset, to_grayscale, DatasetSplit, ImageFormat,
};
use canecov_core::metrics::psnr;
use canecov_core::superres::{
    train_generator_l1, unshuffle_factor, GeneratorConfig, GeneratorParams, SrTrainConfig,
};
use canecov_core::synth::{generate_classification_dataset, generate_field, DatasetManifest, FieldSpec, MASK_DIR};
use canecov_core::Real;

use crate::args::*;
use crate::pipeline::{missing_classifier, run_pipeline, Models, PipelineOptions};
use crate::{serve, UsageError};

/// What a command prints: JSON under `--json`, text otherwise.
pub struct Report {
    pub json: String,
    pub text: String,
}

impl Report {
    fn same(json: String) -> Self {
        Report { text: json.clone() + "\n", json }
    }
}

pub fn execute(cli: &Cli) -> anyhow::Result<Report> {
    match (&cli.command, cli.precision) {
        (Command::Pipeline(a), Precision::F64) => pipeline::<f64>(a),
        (Command::Pipeline(a), Precision::F32) => pipeline::<f32>(a),
        (Command::Split(a), _) => split(a, cli.seed),
        (Command::TrainClassifier(a), Precision::F64) => train_classifier::<f64>(a, cli.seed),
        (Command::TrainClassifier(a), Precision::F32) => train_classifier::<f32>(a, cli.seed),
        (Command::TrainSr(a), Precision::F64) => train_sr::<f64>(a, cli.seed),
        (Command::TrainSr(a), Precision::F32) => train_sr::<f32>(a, cli.seed),
        (Command::Eval(a), Precision::F64) => eval::<f64>(a, cli.seed),
        (Command::Eval(a), Precision::F32) => eval::<f32>(a, cli.seed),
        (Command::Psnr(a), _) => psnr_cmd(a),
        (Command::Coverage(a), _) => coverage(a),
        (Command::Synth(a), _) => synth(a, cli.seed),
        (Command::Serve(a), _) => serve::run(a).map(|()| Report::same(String::new())),
    }
}

fn json_str(s: impl AsRef<str>) -> String {
    serde_json::to_string(s.as_ref()).expect("string serializes")
}

fn path_json(p: &Path) -> String {
    json_str(p.to_string_lossy())
}

pub fn load_models<T: Real>(
    classifier_model: Option<&Path>,
    sr_model: Option<&Path>,
    outscale: Option<u8>,
) -> anyhow::Result<Models<T>> {
    let classifier_model = classifier_model.ok_or_else(missing_classifier)?;
    let classifier = ClassifierParams::<T>::load(classifier_model)
        .with_context(|| format!("loading classifier model {}", classifier_model.display()))?;
    let generator = match sr_model {
        Some(p) => {
            let (params, cfg) =
                GeneratorParams::<T>::load(p).with_context(|| format!("loading generator model {}", p.display()))?;
            if let Some(s) = outscale {
                if s as usize != cfg.out_scale {
                    return Err(UsageError(format!(
                        "--outscale {s} does not match the generator, which was trained for x{}",
                        cfg.out_scale
                    ))
                    .into());
                }
            }
            Some((params, cfg))
        }
        None => {
            if let Some(s) = outscale.filter(|&s| s != 1) {
                return Err(UsageError(format!(
                    "--outscale {s} needs a generator; pass --sr-model (train one with `canecov train-sr`)"
                ))
                .into());
            }
            None
        }
    };
    Ok(Models { classifier, generator })
}

fn pipeline<T: Real>(a: &PipelineArgs) -> anyhow::Result<Report> {
    let models = load_models::<T>(a.classifier_model.as_deref(), a.sr_model.as_deref(), a.outscale)?;
    let image = load_image(&a.image).context("stage `load` failed")?;
    let opts = PipelineOptions {
        threshold: a.threshold,
        force_coverage: a.force_coverage,
        timings: a.timings,
    };
    let out = run_pipeline(&a.image.to_string_lossy(), &image, &models, &opts)?;
    if let (Some(path), Some(img)) = (&a.enhanced_out, &out.enhanced) {
        save_image(img, path).context("writing enhanced image")?;
    }
    if let (Some(path), Some(mask)) = (&a.mask_out, &out.mask) {
        save_image(&mask.to_image(), path).context("writing mask")?;
    }
    Ok(Report {
        json: out.result.to_json(),
        text: out.result.to_text(),
    })
}

fn split(a: &SplitArgs, seed: u64) -> anyhow::Result<Report> {
    let listing = list_dataset(&a.root)?;
    let split = split_dataset(&listing, a.fraction, seed)?;
    if let Some(out) = &a.out {
        fs::write(out, split.to_json()).with_context(|| format!("writing {}", out.display()))?;
    }
    let classes: Vec<String> = split
        .classes
        .iter()
        .map(|c| format!("{{\"name\":{},\"train\":{},\"test\":{}}}", json_str(&c.name), c.train.len(), c.test.len()))
        .collect();
    let json = format!(
        "{{\"seed\":{},\"train_fraction\":{},\"classes\":[{}],\"train\":{},\"test\":{}}}",
        split.seed,
        split.train_fraction,
        classes.join(","),
        split.train_len(),
        split.test_len()
    );
    let mut text = String::new();
    for c in &split.classes {
        text.push_str(&format!("{}: {} train / {} test\n", c.name, c.train.len(), c.test.len()));
    }
    text.push_str(&format!("total: {} train / {} test\n", split.train_len(), split.test_len()));
    Ok(Report { json, text })
}

fn read_or_make_split(data: &Path, split: Option<&Path>, fraction: f64, seed: u64) -> anyhow::Result<DatasetSplit> {
    match split {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading split {}", p.display()))?;
            Ok(DatasetSplit::from_json(&text)?)
        }
        None => Ok(split_dataset(&list_dataset(data)?, fraction, seed)?),
    }
}

fn train_classifier<T: Real>(a: &TrainClassifierArgs, seed: u64) -> anyhow::Result<Report> {
    let config = ClassifierConfig {
        input_size: a.input_size,
        lr: a.lr,
        batch_size: a.batch_size,
        epochs: a.epochs,
        seed,
        ..Default::default()
    };
    config.validate().map_err(|e| UsageError(e.to_string()))?;
    let split = read_or_make_split(&a.data, a.split.as_deref(), a.fraction, seed)?;
    let (train_set, test_set) = load_split_images::<T>(&a.data, &split, &config)?;
    let (params, history) = classifier::train(&train_set, &test_set, &config, None)?;
    params.save(&a.out, &config)?;
    if let Some(h) = &a.history {
        fs::write(h, history.to_csv()).with_context(|| format!("writing {}", h.display()))?;
    }
    let last = history.last().expect("history has the initial row");
    let opt = |v: Option<f64>| v.map_or_else(|| "null".to_owned(), |x| x.to_string());
    let json = format!(
        "{{\"model\":{},\"history\":{},\"train_images\":{},\"test_images\":{},\"epochs\":{},\"train_loss\":{},\"train_acc\":{},\"val_loss\":{},\"val_acc\":{}}}",
        path_json(&a.out),
        a.history.as_deref().map_or_else(|| "null".to_owned(), path_json),
        train_set.len(),
        test_set.len(),
        config.epochs,
        last.train_loss,
        last.train_acc,
        opt(last.val_loss),
        opt(last.val_acc)
    );
    Ok(Report {
        json,
        text: format!("{}model written to {}\n", history.to_csv(), a.out.display()),
    })
}

fn image_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut dirs = vec![dir.to_path_buf()];
    let mut depth = 0;
    while !dirs.is_empty() && depth < 2 {
        let mut next = Vec::new();
        for d in dirs {
            for entry in fs::read_dir(&d).with_context(|| format!("reading {}", d.display()))? {
                let p = entry?.path();
                let hidden = p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('.'));
                if hidden {
                    continue;
                }
                if p.is_dir() {
                    next.push(p);
                } else if ImageFormat::from_path(&p).is_ok() {
                    out.push(p);
                }
            }
        }
        dirs = next;
        depth += 1;
    }
    out.sort();
    if out.is_empty() {
        bail!("no PNG/PPM/PGM images found under {}", dir.display());
    }
    Ok(out)
}

fn train_sr<T: Real>(a: &TrainSrArgs, seed: u64) -> anyhow::Result<Report> {
    let scale = a.outscale as usize;
    let r = unshuffle_factor(scale);
    if !a.patch.is_multiple_of(scale) || !(a.patch / scale).is_multiple_of(r) || a.patch == 0 {
        return Err(UsageError(format!(
            "--patch {} must be a multiple of {} for x{scale}",
            a.patch,
            scale * r
        ))
        .into());
    }
    let config = GeneratorConfig {
        out_scale: scale,
        ..Default::default()
    };
    let hyper = SrTrainConfig {
        batch_size: a.batch_size,
        epochs: a.epochs,
        lr: a.lr,
        seed,
    };
    let lr_side = a.patch / scale;
    let mut pairs = Vec::new();
    for path in image_files(&a.data)? {
        let hr = resize(&load_image(&path)?.to_rgb(), a.patch, a.patch)?;
        let lr = resize(&hr, lr_side, lr_side)?;
        pairs.push((normalize::<T>(&lr), normalize::<T>(&hr)));
    }
    let (params, history) = train_generator_l1(&pairs, &config, &hyper, None)?;
    params.save(&a.out, &config)?;
    if let Some(h) = &a.history {
        fs::write(h, history.to_csv()).with_context(|| format!("writing {}", h.display()))?;
    }
    let first = history.losses[0];
    let last = *history.losses.last().unwrap();
    let json = format!(
        "{{\"model\":{},\"pairs\":{},\"steps\":{},\"initial_l1\":{first},\"final_l1\":{last}}}",
        path_json(&a.out),
        pairs.len(),
        history.steps
    );
    Ok(Report {
        json,
        text: format!(
            "{} pairs, {} steps, L1 {first:.5} -> {last:.5}\nmodel written to {}\n",
            pairs.len(),
            history.steps,
            a.out.display()
        ),
    })
}

fn eval<T: Real>(a: &EvalArgs, seed: u64) -> anyhow::Result<Report> {
    let (params, config) = ClassifierParams::<T>::load(&a.model)
        .with_context(|| format!("loading classifier model {}", a.model.display()))?;
    let split = read_or_make_split(&a.data, a.split.as_deref(), a.fraction, seed)?;
    let (_, test_set) = load_split_images::<T>(&a.data, &split, &config)?;
    if test_set.is_empty() {
        bail!("the test split is empty");
    }
    let m = classifier::evaluate(&test_set, &config, &params)?;
    let text = format!(
        "              pred poblada  pred despoblada\npoblada       {:>12}  {:>15}\ndespoblada    {:>12}  {:>15}\naccuracy {:.4}\n",
        m.counts[0][0],
        m.counts[0][1],
        m.counts[1][0],
        m.counts[1][1],
        m.accuracy().unwrap_or(f64::NAN)
    );
    Ok(Report { json: m.to_json(), text })
}

fn psnr_cmd(a: &PsnrArgs) -> anyhow::Result<Report> {
    let r = psnr(&load_image(&a.reference)?, &load_image(&a.candidate)?)?;
    let db = r
        .psnr_db
        .finite()
        .map_or_else(|| "inf".to_owned(), |v| format!("{v:.4}"));
    Ok(Report {
        json: r.to_json(),
        text: format!("MSE {}\nPSNR {db} dB\n", r.mse),
    })
}

const PSEUDOCOLOR_STOPS: [[u8; 3]; 3] = [[68, 1, 84], [33, 145, 140], [253, 231, 37]];

fn coverage(a: &CoverageArgs) -> anyhow::Result<Report> {
    let image = load_image(&a.image)?;
    let (report, mask) = coverage_report(&image, a.threshold)?;
    if let Some(p) = &a.mask_out {
        save_image(&mask.to_image(), p).context("writing mask")?;
    }
    if let Some(p) = &a.pseudocolor_out {
        save_image(&pseudocolor(&to_grayscale(&image), &PSEUDOCOLOR_STOPS)?, p).context("writing pseudocolor image")?;
    }
    let mut text = format!(
        "threshold {} (gray {})\npopulated   {}% ({} px)\ndepopulated {}% ({} px)\n",
        report.threshold_user,
        report.threshold_gray,
        report.populated_pct_display(),
        report.populated_pixels,
        report.depopulated_pct_display(),
        report.depopulated_pixels
    );
    if report.low_contrast {
        text.push_str("warning: crop and soil gray levels are close; the split may be unreliable\n");
    }
    Ok(Report {
        json: report.to_json(),
        text,
    })
}

fn synth(a: &SynthArgs, seed: u64) -> anyhow::Result<Report> {
    if a.size == 0 {
        return Err(UsageError("--size must be positive".into()).into());
    }
    match a.gap {
        Some(gap) => {
            let spec = FieldSpec {
                width: a.size,
                height: a.size,
                gap_fraction_target: gap,
                seed,
                ..Default::default()
            };
            let field = generate_field(&spec)?;
            save_image(&field.image, &a.out)?;
            if let Some(m) = &a.mask_out {
                save_image(&field.mask.to_image(), m)?;
            }
            let json = format!(
                "{{\"image\":{},\"gap_fraction\":{},\"ideal_threshold\":{}}}",
                path_json(&a.out),
                field.gap_fraction,
                spec.ideal_user_threshold()
            );
            let text = format!(
                "wrote {} (gap fraction {:.4}, ideal threshold {:.2})\n",
                a.out.display(),
                field.gap_fraction,
                spec.ideal_user_threshold()
            );
            Ok(Report { json, text })
        }
        None => {
            let manifest = generate_classification_dataset(a.n, seed, &a.out, a.size)?;
            let json = format!(
                "{{\"root\":{},\"images\":{},\"manifest\":{},\"masks\":{}}}",
                path_json(&a.out),
                manifest.entries.len(),
                path_json(&a.out.join(DatasetManifest::FILE_NAME)),
                path_json(&a.out.join(MASK_DIR))
            );
            let text = format!("wrote {} images under {}\n", manifest.entries.len(), a.out.display());
            Ok(Report { json, text })
        }
    }
}
