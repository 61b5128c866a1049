use std::time::Instant;

use anyhow::{anyhow, Context};
use canecov_core::classes::CropClass;
use canecov_core::classifier::{self, ClassifierConfig, ClassifierParams, Prediction};
use canecov_core::coverage::{coverage_report, CoverageReport, SegmentationMask};
use canecov_core::image_io::ImageBuffer;
use canecov_core::superres::{self, GeneratorConfig, GeneratorParams};
use canecov_core::Real;

pub struct Models<T> {
    pub classifier: (ClassifierParams<T>, ClassifierConfig),
    pub generator: Option<(GeneratorParams<T>, GeneratorConfig)>,
}

pub struct PipelineOptions {
    pub threshold: f64,
    pub force_coverage: bool,
    pub timings: bool,
}

#[derive(Clone, Debug)]
pub struct PipelineResult {
    pub image: String,
    /// Scale and output size of the enhancement stage, when it ran.
    pub enhanced: Option<(usize, usize, usize)>,
    pub prediction: Prediction,
    pub coverage: Option<CoverageReport>,
    pub timings_ms: Option<Vec<(&'static str, f64)>>,
}

pub struct PipelineOutput {
    pub result: PipelineResult,
    pub enhanced: Option<ImageBuffer>,
    pub mask: Option<SegmentationMask>,
}

impl PipelineResult {
    pub fn coverage_skipped(&self) -> bool {
        self.coverage.is_none()
    }

    /// A populated classification with coverage skipped counts as 100% populated.
    pub fn populated_pct_display(&self) -> String {
        self.coverage
            .as_ref()
            .map_or_else(|| "100.00".into(), CoverageReport::populated_pct_display)
    }

    pub fn depopulated_pct_display(&self) -> String {
        self.coverage
            .as_ref()
            .map_or_else(|| "0.00".into(), CoverageReport::depopulated_pct_display)
    }

    pub fn to_json(&self) -> String {
        let image = serde_json::to_string(&self.image).expect("string serializes");
        let enhanced = self.enhanced.map_or_else(
            || "null".to_owned(),
            |(s, w, h)| format!("{{\"outscale\":{s},\"width\":{w},\"height\":{h}}}"),
        );
        let coverage = self
            .coverage
            .as_ref()
            .map_or_else(|| "null".to_owned(), CoverageReport::to_json);
        let mut out = format!(
            "{{\"image\":{image},\"enhanced\":{enhanced},\"prediction\":{},\"coverage_skipped\":{},\"populated_pct\":{},\"depopulated_pct\":{},\"coverage\":{coverage}",
            self.prediction.to_json(),
            self.coverage_skipped(),
            self.populated_pct_display(),
            self.depopulated_pct_display(),
        );
        if let Some(t) = &self.timings_ms {
            let parts: Vec<String> = t.iter().map(|(k, v)| format!("\"{k}\":{v:.3}")).collect();
            out.push_str(&format!(",\"timings_ms\":{{{}}}", parts.join(",")));
        }
        out.push('}');
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some((scale, w, h)) = self.enhanced {
            s.push_str(&format!("enhanced x{scale} to {w}x{h}\n"));
        }
        s.push_str(&format!(
            "prediction: {} (poblada {:.1}%, despoblada {:.1}%)\n",
            self.prediction.label,
            100.0 * self.prediction.probs[0],
            100.0 * self.prediction.probs[1]
        ));
        match &self.coverage {
            Some(r) => s.push_str(&format!(
                "threshold {} (gray {}): populated {}%, depopulated {}%\n",
                r.threshold_user,
                r.threshold_gray,
                self.populated_pct_display(),
                self.depopulated_pct_display()
            )),
            None => s.push_str("coverage skipped: field classified as fully populated (100.00%)\n"),
        }
        if let Some(t) = &self.timings_ms {
            for (k, v) in t {
                s.push_str(&format!("{k}: {v:.1} ms\n"));
            }
        }
        s
    }
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Enhance (when a generator is loaded), classify, then measure coverage for
/// depopulated fields or when forced.
pub fn run_pipeline<T: Real>(
    name: &str,
    image: &ImageBuffer,
    models: &Models<T>,
    opts: &PipelineOptions,
) -> anyhow::Result<PipelineOutput> {
    let mut timings = Vec::new();

    let t = Instant::now();
    let (working, enhanced) = match &models.generator {
        Some((params, cfg)) => {
            let out = superres::enhance(image, cfg, params).context("stage `superres` failed")?;
            (out.clone(), Some(out))
        }
        None => (image.clone(), None),
    };
    timings.push(("superres", elapsed_ms(t)));

    let t = Instant::now();
    let (cparams, ccfg) = &models.classifier;
    let prediction = classifier::predict(&working, ccfg, cparams).context("stage `classify` failed")?;
    timings.push(("classify", elapsed_ms(t)));

    let t = Instant::now();
    let (coverage, mask) = if prediction.label == CropClass::Despoblada || opts.force_coverage {
        let (r, m) = coverage_report(&working, opts.threshold).context("stage `coverage` failed")?;
        (Some(r), Some(m))
    } else {
        (None, None)
    };
    timings.push(("coverage", elapsed_ms(t)));

    let enhanced_dims = match (&models.generator, &enhanced) {
        (Some((_, cfg)), Some(img)) => Some((cfg.out_scale, img.width(), img.height())),
        _ => None,
    };
    Ok(PipelineOutput {
        result: PipelineResult {
            image: name.to_owned(),
            enhanced: enhanced_dims,
            prediction,
            coverage,
            timings_ms: opts.timings.then_some(timings),
        },
        enhanced,
        mask,
    })
}

pub fn missing_classifier() -> anyhow::Error {
    anyhow!(
        "no classifier model given; train one with `canecov train-classifier --data <dir> --out model.cccl` \
         and pass it with --classifier-model"
    )
}
