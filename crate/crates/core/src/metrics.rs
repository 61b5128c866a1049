//! PSNR/MSE image quality, per-epoch PSNR summaries, and confusion matrices.

use serde::{Serialize, Serializer};

use crate::classes::CropClass;
use crate::error::{invalid, shape_err, Result};
use crate::image_io::ImageBuffer;

pub const PSNR_MAX_VALUE: f64 = 255.0;

/// PSNR in decibels. Identical images have no finite PSNR, so the infinite
/// case is its own variant instead of a division by zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Decibels {
    Finite(f64),
    Infinite,
}

impl Decibels {
    pub fn finite(self) -> Option<f64> {
        match self {
            Decibels::Finite(v) => Some(v),
            Decibels::Infinite => None,
        }
    }
}

impl Serialize for Decibels {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Decibels::Finite(v) => s.serialize_f64(*v),
            Decibels::Infinite => s.serialize_str("inf"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PsnrResult {
    pub mse: f64,
    pub psnr_db: Decibels,
}

impl PsnrResult {
    pub fn from_mse(mse: f64) -> Self {
        let psnr_db = if mse == 0.0 {
            Decibels::Infinite
        } else {
            Decibels::Finite(10.0 * (PSNR_MAX_VALUE * PSNR_MAX_VALUE / mse).log10())
        };
        PsnrResult { mse, psnr_db }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("psnr serializes")
    }
}

/// MSE over every channel of every pixel in 8-bit space, then PSNR with MAX = 255.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<PsnrResult> {
    if (a.width(), a.height(), a.channels()) != (b.width(), b.height(), b.channels()) {
        return Err(shape_err!(
            "psnr needs identical images: {}×{}×{} vs {}×{}×{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        ));
    }
    let sq: u64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| {
            let d = x.abs_diff(y) as u64;
            d * d
        })
        .sum();
    Ok(PsnrResult::from_mse(sq as f64 / a.pixels().len() as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PsnrSummary {
    pub mean_early: f64,
    pub mean_late: f64,
    pub relative_change_pct: f64,
}

/// Means of epochs `1..=boundary` and `boundary+1..=end`, and the late mean's
/// change relative to the early one, in percent.
pub fn psnr_epoch_summary(per_epoch_psnr: &[f64], boundary: usize) -> Result<PsnrSummary> {
    if boundary == 0 || boundary >= per_epoch_psnr.len() {
        return Err(invalid!(
            "boundary {boundary} leaves an empty segment in a series of {}",
            per_epoch_psnr.len()
        ));
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let (early, late) = per_epoch_psnr.split_at(boundary);
    Ok(summary_from_means(mean(early), mean(late)))
}

pub fn summary_from_means(mean_early: f64, mean_late: f64) -> PsnrSummary {
    PsnrSummary {
        mean_early,
        mean_late,
        relative_change_pct: 100.0 * (mean_late - mean_early) / mean_early,
    }
}

/// 2×2 tally, rows are true classes and columns predicted classes, in
/// [`CropClass::ALL`] order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 2]; 2],
}

impl ConfusionMatrix {
    pub fn record(&mut self, truth: CropClass, predicted: CropClass) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (CropClass, CropClass)>) -> Self {
        let mut m = ConfusionMatrix::default();
        for (t, p) in pairs {
            m.record(t, p);
        }
        m
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        self.counts[0][0] + self.counts[1][1]
    }

    /// `None` for an empty matrix.
    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| self.correct() as f64 / total as f64)
    }

    pub fn row_total(&self, truth: CropClass) -> u64 {
        self.counts[truth.index()].iter().sum()
    }

    pub fn column_total(&self, predicted: CropClass) -> u64 {
        self.counts.iter().map(|row| row[predicted.index()]).sum()
    }

    pub fn precision(&self, class: CropClass) -> Option<f64> {
        let col = self.column_total(class);
        (col > 0).then(|| self.counts[class.index()][class.index()] as f64 / col as f64)
    }

    pub fn recall(&self, class: CropClass) -> Option<f64> {
        let row = self.row_total(class);
        (row > 0).then(|| self.counts[class.index()][class.index()] as f64 / row as f64)
    }

    pub fn transposed(&self) -> Self {
        let c = self.counts;
        ConfusionMatrix {
            counts: [[c[0][0], c[1][0]], [c[0][1], c[1][1]]],
        }
    }

    pub fn to_json(&self) -> String {
        let acc = self
            .accuracy()
            .map_or_else(|| "null".to_owned(), |a| a.to_string());
        format!(
            "{{\"classes\":[\"{}\",\"{}\"],\"counts\":[[{},{}],[{},{}]],\"total\":{},\"accuracy\":{}}}",
            CropClass::Poblada,
            CropClass::Despoblada,
            self.counts[0][0],
            self.counts[0][1],
            self.counts[1][0],
            self.counts[1][1],
            self.total(),
            acc
        )
    }
}

/// Tallies label pairs; labels must name one of the two classes.
pub fn confusion_from_pairs<S: AsRef<str>>(truths: &[S], predictions: &[S]) -> Result<ConfusionMatrix> {
    if truths.len() != predictions.len() {
        return Err(invalid!(
            "{} truths but {} predictions",
            truths.len(),
            predictions.len()
        ));
    }
    let mut m = ConfusionMatrix::default();
    for (t, p) in truths.iter().zip(predictions) {
        m.record(t.as_ref().parse()?, p.as_ref().parse()?);
    }
    Ok(m)
}
