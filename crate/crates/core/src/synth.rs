//! Synthetic cane-field imagery with exact ground-truth gap masks.
//!
//! Gaps (bare soil) are unions of rectangles and ellipses drawn over a
//! striped crop texture; both textures get uniform per-pixel noise.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classes::CropClass;
use crate::coverage::SegmentationMask;
use crate::error::{invalid, Error, Result};
use crate::image_io::{save_image, ImageBuffer};
use crate::rng::SplitMix64;

/// Maximum distance between achieved and requested gap fraction.
pub const GAP_FRACTION_TOLERANCE: f64 = 0.02;
/// Minimum luminance gap between crop and soil in well-separated mode.
pub const MIN_SEPARATION: f64 = 60.0;

/// Hidden so that dataset listing does not mistake it for a class.
pub const MASK_DIR: &str = ".masks";

const ROW_PERIOD: usize = 6;
const ROW_SHADE: i32 = 14;
const MAX_PLACEMENTS: usize = 100_000;

#[derive(Clone, Debug, PartialEq)]
pub struct FieldSpec {
    pub width: usize,
    pub height: usize,
    pub gap_fraction_target: f64,
    pub crop_color_mean: [u8; 3],
    pub soil_color_mean: [u8; 3],
    pub noise_amplitude: u8,
    pub blob_count: usize,
    pub seed: u64,
    pub well_separated: bool,
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec {
            width: 128,
            height: 128,
            gap_fraction_target: 0.25,
            crop_color_mean: [46, 112, 42],
            soil_color_mean: [196, 172, 128],
            noise_amplitude: 12,
            blob_count: 6,
            seed: 0,
            well_separated: true,
        }
    }
}

impl FieldSpec {
    pub fn crop_luminance(&self) -> f64 {
        let [r, g, b] = self.crop_color_mean;
        0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64
    }

    pub fn soil_luminance(&self) -> f64 {
        let [r, g, b] = self.soil_color_mean;
        0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64
    }

    /// Gray level halfway between the crop and soil colour means.
    pub fn ideal_gray_cut(&self) -> f64 {
        (self.crop_luminance() + self.soil_luminance()) / 2.0
    }

    /// [`Self::ideal_gray_cut`] on the 0–10 user threshold scale.
    pub fn ideal_user_threshold(&self) -> f64 {
        self.ideal_gray_cut() * 10.0 / 255.0
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(invalid!("field must be at least 1×1"));
        }
        if !(0.0..1.0).contains(&self.gap_fraction_target) {
            return Err(invalid!(
                "gap fraction target must be in [0, 1), got {}",
                self.gap_fraction_target
            ));
        }
        if self.gap_fraction_target > 0.0 && self.blob_count == 0 {
            return Err(invalid!(
                "gap fraction {} is unreachable with zero blobs",
                self.gap_fraction_target
            ));
        }
        if self.well_separated && self.soil_luminance() - self.crop_luminance() < MIN_SEPARATION {
            return Err(invalid!(
                "soil and crop luminance differ by {:.1} < {MIN_SEPARATION}",
                self.soil_luminance() - self.crop_luminance()
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticField {
    pub image: ImageBuffer,
    /// `true` marks bare soil.
    pub mask: SegmentationMask,
    /// Exactly `mask.count_set() / (width·height)`.
    pub gap_fraction: f64,
}

/// Pixels of one random rectangle or ellipse of roughly `area` pixels.
fn random_blob(rng: &mut ChaCha8Rng, width: usize, height: usize, area: f64) -> Vec<usize> {
    let aspect: f64 = rng.random_range(0.5..2.0);
    let ellipse = rng.random_bool(0.5);
    // ellipse area = π/4 · w · h
    let area = if ellipse { area * 4.0 / std::f64::consts::PI } else { area }.max(1.0);
    let bw = (area * aspect).sqrt().round().clamp(1.0, width as f64) as usize;
    let bh = (area / aspect).sqrt().round().clamp(1.0, height as f64) as usize;
    let x0 = rng.random_range(0..=width - bw);
    let y0 = rng.random_range(0..=height - bh);
    let mut pixels = Vec::with_capacity(bw * bh);
    let (cx, cy) = (bw as f64 / 2.0, bh as f64 / 2.0);
    for y in 0..bh {
        for x in 0..bw {
            let inside = !ellipse || {
                let dx = (x as f64 + 0.5 - cx) / cx;
                let dy = (y as f64 + 0.5 - cy) / cy;
                dx * dx + dy * dy <= 1.0
            };
            if inside {
                pixels.push((y0 + y) * width + x0 + x);
            }
        }
    }
    pixels
}

fn place_blobs(spec: &FieldSpec, rng: &mut ChaCha8Rng) -> Result<Vec<bool>> {
    let total = spec.width * spec.height;
    let mut mask = vec![false; total];
    if spec.gap_fraction_target == 0.0 {
        return Ok(mask);
    }
    let target = spec.gap_fraction_target * total as f64;
    // aim inside half the tolerance band
    let lower = target - GAP_FRACTION_TOLERANCE / 2.0 * total as f64;
    let upper = target + GAP_FRACTION_TOLERANCE / 2.0 * total as f64;
    let mut count = 0usize;
    let mut placed = 0usize;
    let mut shrink = 1.0;
    for _ in 0..MAX_PLACEMENTS {
        if count as f64 >= lower {
            return Ok(mask);
        }
        let remaining = target - count as f64;
        let blobs_left = spec.blob_count.saturating_sub(placed).max(1);
        let blob = random_blob(rng, spec.width, spec.height, remaining / blobs_left as f64 * shrink);
        let fresh = blob.iter().filter(|&&i| !mask[i]).count();
        if fresh == 0 {
            continue;
        }
        if (count + fresh) as f64 > upper {
            shrink *= 0.5;
            continue;
        }
        for i in blob {
            mask[i] = true;
        }
        count += fresh;
        placed += 1;
        shrink = 1.0;
    }
    Err(invalid!(
        "could not reach gap fraction {} within {MAX_PLACEMENTS} placements",
        spec.gap_fraction_target
    ))
}

/// Renders the field. Crop shows darker planting rows; both textures carry
/// uniform noise in `±noise_amplitude`, clamped per channel.
pub fn generate_field(spec: &FieldSpec) -> Result<SyntheticField> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let bits = place_blobs(spec, &mut rng)?;
    let amp = spec.noise_amplitude as i32;
    let mut pixels = Vec::with_capacity(bits.len() * 3);
    for (i, &gap) in bits.iter().enumerate() {
        let y = i / spec.width;
        let (base, shade) = if gap {
            (spec.soil_color_mean, 0)
        } else {
            let shade = if y % ROW_PERIOD < 2 { -ROW_SHADE } else { 0 };
            (spec.crop_color_mean, shade)
        };
        let noise = if amp > 0 { rng.random_range(-amp..=amp) } else { 0 };
        pixels.extend(base.iter().map(|&c| (c as i32 + shade + noise).clamp(0, 255) as u8));
    }
    let image = ImageBuffer::new(spec.width, spec.height, 3, pixels)?;
    let mask = SegmentationMask::new(spec.width, spec.height, bits)?;
    let gap_fraction = mask.count_set() as f64 / (spec.width * spec.height) as f64;
    Ok(SyntheticField {
        image,
        mask,
        gap_fraction,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    /// Path relative to the dataset root, e.g. `poblada/field_0003.png`.
    pub filename: String,
    pub class: CropClass,
    pub gap_fraction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub const FILE_NAME: &'static str = "manifest.csv";

    pub fn to_csv(&self) -> String {
        let mut s = String::from("filename,class,gap_fraction\n");
        for e in &self.entries {
            s.push_str(&format!("{},{},{}\n", e.filename, e.class, e.gap_fraction));
        }
        s
    }

    pub fn from_csv(root: impl Into<PathBuf>, text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            let [filename, class, fraction] = cols[..] else {
                return Err(invalid!("manifest line {}: expected 3 columns", n + 1));
            };
            entries.push(ManifestEntry {
                filename: filename.to_owned(),
                class: class.parse()?,
                gap_fraction: fraction
                    .parse()
                    .map_err(|_| invalid!("manifest line {}: bad fraction `{fraction}`", n + 1))?,
            });
        }
        Ok(DatasetManifest {
            root: root.into(),
            entries,
        })
    }

    /// Path of the ground-truth mask stored for an entry.
    pub fn mask_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.root
            .join(MASK_DIR)
            .join(Path::new(&entry.filename).with_extension("pgm"))
    }
}

/// Parameters of one labeled field drawn for the classification dataset.
pub fn classification_field_spec(class: CropClass, size: usize, seed: u64) -> FieldSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gap_fraction_target = match class {
        CropClass::Poblada => rng.random_range(0.0..0.03),
        CropClass::Despoblada => rng.random_range(0.22..0.6),
    };
    let base = FieldSpec::default();
    let mut jitter = |c: [u8; 3]| c.map(|v| (v as i32 + rng.random_range(-10..=10)).clamp(0, 255) as u8);
    FieldSpec {
        width: size,
        height: size,
        gap_fraction_target,
        crop_color_mean: jitter(base.crop_color_mean),
        soil_color_mean: jitter(base.soil_color_mean),
        blob_count: rng.random_range(3..=8),
        seed: rng.random(),
        ..base
    }
}

/// Writes `n_per_class` fields per class under `out_dir/<class>/`, their masks
/// under `out_dir/.masks/<class>/`, and `out_dir/manifest.csv`.
///
/// Populated fields have gap fraction ≤ 0.05, depopulated ones ≥ 0.20.
pub fn generate_classification_dataset(
    n_per_class: usize,
    seed: u64,
    out_dir: impl AsRef<Path>,
    size: usize,
) -> Result<DatasetManifest> {
    if n_per_class == 0 {
        return Err(invalid!("need at least one image per class"));
    }
    let root = out_dir.as_ref();
    let mut seeds = SplitMix64::new(seed);
    let mut manifest = DatasetManifest {
        root: root.to_path_buf(),
        entries: Vec::with_capacity(2 * n_per_class),
    };
    for class in CropClass::ALL {
        for dir in [root.join(class.name()), root.join(MASK_DIR).join(class.name())] {
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        for i in 0..n_per_class {
            let spec = classification_field_spec(class, size, seeds.next_u64());
            let field = generate_field(&spec)?;
            let entry = ManifestEntry {
                filename: format!("{}/field_{i:04}.png", class.name()),
                class,
                gap_fraction: field.gap_fraction,
            };
            save_image(&field.image, root.join(&entry.filename))?;
            save_image(&field.mask.to_image(), manifest.mask_path(&entry))?;
            manifest.entries.push(entry);
        }
    }
    let path = root.join(DatasetManifest::FILE_NAME);
    fs::write(&path, manifest.to_csv()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
