use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "canecov",
    version,
    about = "Enhance, classify and measure gaps in aerial sugar-cane imagery"
)]
pub struct Cli {
    /// Seed for every random choice (splits, initialization, sample order).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,

    /// Flat key=value file with defaults for any flag; explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Scalar type used for network arithmetic.
    #[arg(long, global = true, value_enum, default_value_t = Precision::F64)]
    pub precision: Precision,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run enhance → classify → coverage on one image.
    Pipeline(PipelineArgs),
    /// Split a class-per-directory dataset into train and test lists.
    Split(SplitArgs),
    /// Train the two-class field classifier.
    TrainClassifier(TrainClassifierArgs),
    /// Train the super-resolution generator with an L1 loss.
    TrainSr(TrainSrArgs),
    /// Confusion matrix of a trained classifier on a test split.
    Eval(EvalArgs),
    /// Peak signal-to-noise ratio between two images.
    Psnr(PsnrArgs),
    /// Threshold an image and report populated/depopulated percentages.
    Coverage(CoverageArgs),
    /// Generate synthetic fields with exact gap masks.
    Synth(SynthArgs),
    /// Serve the HTTP API and the web UI.
    Serve(ServeArgs),
}

fn threshold_in_range(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..=10.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("threshold must be between 0 and 10, got {v}"))
    }
}

fn fraction_in_range(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("fraction must be strictly between 0 and 1, got {v}"))
    }
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    pub image: PathBuf,

    #[arg(long)]
    pub classifier_model: Option<PathBuf>,

    /// Generator weights; without them the image is classified as is.
    #[arg(long)]
    pub sr_model: Option<PathBuf>,

    /// Expected magnification; must match the generator when one is given.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    pub outscale: Option<u8>,

    /// Gap threshold on the 0–10 scale.
    #[arg(long, default_value_t = 5.0, value_parser = threshold_in_range)]
    pub threshold: f64,

    /// Measure coverage even when the image is classified as populated.
    #[arg(long)]
    pub force_coverage: bool,

    /// Include per-stage wall-clock times in the result.
    #[arg(long)]
    pub timings: bool,

    /// Write the gap mask (white = bare soil) as PGM or PNG.
    #[arg(long)]
    pub mask_out: Option<PathBuf>,

    /// Write the enhanced image.
    #[arg(long)]
    pub enhanced_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Dataset root with one directory per class.
    pub root: PathBuf,

    #[arg(long, default_value_t = 0.8, value_parser = fraction_in_range)]
    pub fraction: f64,

    /// Where to write the full split listing.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainClassifierArgs {
    /// Dataset root with `poblada/` and `despoblada/` directories.
    #[arg(long)]
    pub data: PathBuf,

    /// Split listing from `canecov split`; computed from --fraction when absent.
    #[arg(long)]
    pub split: Option<PathBuf>,

    #[arg(long, default_value_t = 0.8, value_parser = fraction_in_range)]
    pub fraction: f64,

    #[arg(long, default_value_t = 5)]
    pub epochs: usize,

    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,

    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,

    #[arg(long, default_value_t = 224)]
    pub input_size: usize,

    #[arg(long)]
    pub out: PathBuf,

    /// Per-epoch loss/accuracy CSV.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainSrArgs {
    /// Directory of high-resolution images (class subdirectories are searched too).
    #[arg(long)]
    pub data: PathBuf,

    #[arg(long)]
    pub out: PathBuf,

    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u8).range(1..=4))]
    pub outscale: u8,

    /// Side of the square high-resolution training patch.
    #[arg(long, default_value_t = 32)]
    pub patch: usize,

    #[arg(long, default_value_t = 500)]
    pub epochs: usize,

    #[arg(long, default_value_t = 48)]
    pub batch_size: usize,

    #[arg(long, default_value_t = 0.0001)]
    pub lr: f64,

    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,

    #[arg(long)]
    pub data: PathBuf,

    #[arg(long)]
    pub split: Option<PathBuf>,

    #[arg(long, default_value_t = 0.8, value_parser = fraction_in_range)]
    pub fraction: f64,
}

#[derive(Debug, Args)]
pub struct PsnrArgs {
    pub reference: PathBuf,
    pub candidate: PathBuf,
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    pub image: PathBuf,

    #[arg(long, default_value_t = 5.0, value_parser = threshold_in_range)]
    pub threshold: f64,

    #[arg(long)]
    pub mask_out: Option<PathBuf>,

    /// Write a pseudocolored rendering of the grayscale image.
    #[arg(long)]
    pub pseudocolor_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory, or output image path with --gap.
    #[arg(long)]
    pub out: PathBuf,

    /// Images per class.
    #[arg(long, default_value_t = 10)]
    pub n: usize,

    #[arg(long, default_value_t = 224)]
    pub size: usize,

    /// Generate a single field with this gap fraction instead of a dataset.
    #[arg(long)]
    pub gap: Option<f64>,

    /// Mask output path for --gap.
    #[arg(long)]
    pub mask_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub addr: String,

    /// 0 picks a free port.
    #[arg(long, default_value_t = 8080)]
    pub port: u16,

    /// Image gallery directory; uploads land here too.
    #[arg(long, default_value = "images")]
    pub images: PathBuf,

    #[arg(long)]
    pub classifier_model: Option<PathBuf>,

    #[arg(long)]
    pub sr_model: Option<PathBuf>,

    /// Built web UI to serve at `/`.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}
