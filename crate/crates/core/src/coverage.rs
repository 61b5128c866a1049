//! Threshold segmentation and pixel-count coverage estimation.
//!
//! Bright pixels (above the cut) are depopulated ground, dark pixels are crop.

use std::fmt::Write as _;

use crate::error::{invalid, Error, Result};
use crate::image_io::{to_grayscale, ImageBuffer};

/// Gray levels between the two segment means below which a report is flagged.
pub const LOW_CONTRAST_GRAY_LEVELS: f64 = 30.0;

/// Maps the 0–10 user scale onto a gray cut: `round(user / 10 · 255)`, halves up.
pub fn map_threshold(user: f64) -> Result<u8> {
    if !(0.0..=10.0).contains(&user) {
        return Err(invalid!("threshold must be within 0–10, got {user}"));
    }
    Ok((user * 255.0 / 10.0 + 0.5).floor() as u8)
}

/// One bit per pixel, `true` where the pixel is depopulated (brighter than the cut).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentationMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl SegmentationMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(invalid!("mask of {width}×{height} needs {} bits, got {}", width * height, bits.len()));
        }
        Ok(SegmentationMask { width, height, bits })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count_set(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn fraction_set(&self) -> f64 {
        self.count_set() as f64 / self.bits.len() as f64
    }

    /// Gray image with 255 for set bits and 0 elsewhere.
    pub fn to_image(&self) -> ImageBuffer {
        let pixels = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        ImageBuffer::new(self.width, self.height, 1, pixels).expect("mask dims are valid")
    }

    /// Reads a mask back from a 0/255 gray image (any non-zero pixel is set).
    pub fn from_image(image: &ImageBuffer) -> Result<Self> {
        if image.channels() != 1 {
            return Err(invalid!("mask images are single-channel"));
        }
        Self::new(image.width(), image.height(), image.pixels().iter().map(|&p| p != 0).collect())
    }
}

/// Strict comparison: a pixel is set iff its gray value is greater than `cut`.
pub fn segment(gray: &ImageBuffer, cut: u8) -> Result<SegmentationMask> {
    if gray.channels() != 1 {
        return Err(invalid!(
            "segment needs a 1-channel image; convert with to_grayscale first"
        ));
    }
    SegmentationMask::new(
        gray.width(),
        gray.height(),
        gray.pixels().iter().map(|&p| p > cut).collect(),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoverageReport {
    pub threshold_user: f64,
    pub threshold_gray: u8,
    pub total_pixels: u64,
    pub populated_pixels: u64,
    pub depopulated_pixels: u64,
    pub populated_pct: f64,
    pub depopulated_pct: f64,
    /// Set when the two segments' mean gray levels are closer than
    /// [`LOW_CONTRAST_GRAY_LEVELS`]; never set when one segment is empty.
    pub low_contrast: bool,
}

/// `round(10000 · count / total)` with halves up, in integers.
fn hundredths_of_percent(count: u64, total: u64) -> u64 {
    (20_000 * count as u128 + total as u128) as u64 / (2 * total)
}

fn format_hundredths(v: u64) -> String {
    format!("{}.{:02}", v / 100, v % 100)
}

impl CoverageReport {
    fn from_counts(threshold_user: f64, threshold_gray: u8, total: u64, depopulated: u64, low_contrast: bool) -> Self {
        let populated = total - depopulated;
        CoverageReport {
            threshold_user,
            threshold_gray,
            total_pixels: total,
            populated_pixels: populated,
            depopulated_pixels: depopulated,
            populated_pct: 100.0 * populated as f64 / total as f64,
            depopulated_pct: 100.0 * depopulated as f64 / total as f64,
            low_contrast,
        }
    }

    /// Depopulated share rounded to two decimals, as rendered.
    pub fn depopulated_pct_display(&self) -> String {
        format_hundredths(hundredths_of_percent(self.depopulated_pixels, self.total_pixels))
    }

    /// Complement of the rendered depopulated share, so the two always add to 100.00.
    pub fn populated_pct_display(&self) -> String {
        format_hundredths(10_000 - hundredths_of_percent(self.depopulated_pixels, self.total_pixels))
    }

    /// Fixed key order; percentages carry exactly two decimals.
    pub fn to_json(&self) -> String {
        let mut s = String::with_capacity(192);
        write!(
            s,
            "{{\"threshold_user\":{},\"threshold_gray\":{},\"total\":{},\"populated\":{},\"depopulated\":{},\"populated_pct\":{},\"depopulated_pct\":{},\"low_contrast\":{}}}",
            self.threshold_user,
            self.threshold_gray,
            self.total_pixels,
            self.populated_pixels,
            self.depopulated_pixels,
            self.populated_pct_display(),
            self.depopulated_pct_display(),
            self.low_contrast
        )
        .unwrap();
        s
    }
}

/// Grayscale, map the user threshold, segment, and count.
pub fn coverage_report(image: &ImageBuffer, user_threshold: f64) -> Result<(CoverageReport, SegmentationMask)> {
    let cut = map_threshold(user_threshold)?;
    let gray = to_grayscale(image);
    let mask = segment(&gray, cut)?;

    let (mut bright_sum, mut dark_sum, mut bright_n) = (0u64, 0u64, 0u64);
    for (&p, &set) in gray.pixels().iter().zip(mask.bits()) {
        if set {
            bright_sum += p as u64;
            bright_n += 1;
        } else {
            dark_sum += p as u64;
        }
    }
    let total = gray.pixel_count() as u64;
    let dark_n = total - bright_n;
    let low_contrast = bright_n > 0
        && dark_n > 0
        && (bright_sum as f64 / bright_n as f64 - dark_sum as f64 / dark_n as f64) < LOW_CONTRAST_GRAY_LEVELS;

    Ok((
        CoverageReport::from_counts(user_threshold, cut, total, bright_n, low_contrast),
        mask,
    ))
}

/// Colours a gray image through evenly spaced colour stops (visualization only).
pub fn pseudocolor(gray: &ImageBuffer, stops: &[[u8; 3]]) -> Result<ImageBuffer> {
    if stops.len() < 2 {
        return Err(invalid!("pseudocolor needs at least 2 colour stops, got {}", stops.len()));
    }
    if gray.channels() != 1 {
        return Err(Error::InvalidArgument("pseudocolor expects a gray image".into()));
    }
    let segments = (stops.len() - 1) as u32;
    let lut: Vec<[u8; 3]> = (0..=255u32)
        .map(|g| {
            let pos = g * segments;
            let (i, rem) = ((pos / 255) as usize, pos % 255);
            if i as u32 == segments {
                return stops[i];
            }
            let (a, b) = (stops[i], stops[i + 1]);
            std::array::from_fn(|c| {
                let (a, b) = (a[c] as i32, b[c] as i32);
                // a + (b - a)·rem/255, rounded half away from zero
                let num = (b - a) * rem as i32;
                let delta = (2 * num + num.signum() * 255) / 510;
                (a + delta) as u8
            })
        })
        .collect();
    let pixels = gray.pixels().iter().flat_map(|&g| lut[g as usize]).collect();
    ImageBuffer::new(gray.width(), gray.height(), 3, pixels)
}
