//! 8-bit rasters, colour conversion, resizing, normalization and dataset splits.

mod codec;
mod dataset;

pub use codec::{decode_image, encode_png, load_image, save_image, ImageFormat};
pub use dataset::{list_dataset, split_dataset, ClassListing, ClassSplit, DatasetSplit};

use crate::error::{invalid, shape_err, Result};
use crate::scalar::Real;
use crate::tensor::{axis_taps, Tensor};

/// Row-major, channel-interleaved 8-bit image with 1 (gray) or 3 (RGB) channels.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid!("image dimensions must be positive, got {width}×{height}"));
        }
        if channels != 1 && channels != 3 {
            return Err(invalid!("images have 1 or 3 channels, got {channels}"));
        }
        if pixels.len() != width * height * channels {
            return Err(shape_err!(
                "{width}×{height}×{channels} image needs {} bytes, got {}",
                width * height * channels,
                pixels.len()
            ));
        }
        Ok(ImageBuffer {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> u8,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    pixels.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }
    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.pixels[i..i + self.channels]
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Replicates a gray image into three identical channels; RGB is returned as is.
    pub fn to_rgb(&self) -> ImageBuffer {
        if self.channels == 3 {
            return self.clone();
        }
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: 3,
            pixels: self.pixels.iter().flat_map(|&g| [g, g, g]).collect(),
        }
    }
}

/// BT.601 luminance, `round(0.299 R + 0.587 G + 0.114 B)`, in exact integer arithmetic.
#[inline]
pub fn luminance(r: u8, g: u8, b: u8) -> u8 {
    let weighted = 299 * r as u32 + 587 * g as u32 + 114 * b as u32;
    ((weighted + 500) / 1000).min(255) as u8
}

/// Gray images pass through unchanged.
pub fn to_grayscale(image: &ImageBuffer) -> ImageBuffer {
    if image.channels == 1 {
        return image.clone();
    }
    ImageBuffer {
        width: image.width,
        height: image.height,
        channels: 1,
        pixels: image
            .pixels
            .chunks_exact(3)
            .map(|p| luminance(p[0], p[1], p[2]))
            .collect(),
    }
}

fn round_to_u8(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Bilinear resampling with half-pixel centres. Equal dimensions return an exact copy.
pub fn resize(image: &ImageBuffer, out_w: usize, out_h: usize) -> Result<ImageBuffer> {
    if out_w == 0 || out_h == 0 {
        return Err(invalid!("resize target must be at least 1×1, got {out_w}×{out_h}"));
    }
    if (out_w, out_h) == (image.width, image.height) {
        return Ok(image.clone());
    }
    let (w, c) = (image.width, image.channels);
    let ty = axis_taps(image.height, out_h);
    let tx = axis_taps(w, out_w);
    let px = |x: usize, y: usize, ch: usize| image.pixels[(y * w + x) * c + ch] as f64;
    let mut pixels = Vec::with_capacity(out_w * out_h * c);
    for &(y0, y1, fy) in &ty {
        for &(x0, x1, fx) in &tx {
            for ch in 0..c {
                let top = px(x0, y0, ch) * (1.0 - fx) + px(x1, y0, ch) * fx;
                let bottom = px(x0, y1, ch) * (1.0 - fx) + px(x1, y1, ch) * fx;
                pixels.push(round_to_u8(top * (1.0 - fy) + bottom * fy));
            }
        }
    }
    ImageBuffer::new(out_w, out_h, c, pixels)
}

/// `pixel / 255` in channel-planar `C×H×W` layout.
pub fn normalize<T: Real>(image: &ImageBuffer) -> Tensor<T> {
    let (w, h, c) = (image.width, image.height, image.channels);
    let scale = T::lit(255.0);
    let mut data = Vec::with_capacity(image.pixels.len());
    for ch in 0..c {
        data.extend((0..w * h).map(|i| T::from_u8(image.pixels[i * c + ch]).unwrap() / scale));
    }
    Tensor::new(&[c, h, w], data).expect("image dims are positive")
}

/// Inverse of [`normalize`]: clamps to `[0, 1]` and rounds to the nearest level.
pub fn denormalize<T: Real>(tensor: &Tensor<T>) -> Result<ImageBuffer> {
    let (c, h, w) = tensor.dims3()?;
    if c != 1 && c != 3 {
        return Err(shape_err!("cannot export a {c}-channel tensor as an image"));
    }
    let d = tensor.data();
    let mut pixels = Vec::with_capacity(d.len());
    for i in 0..w * h {
        for ch in 0..c {
            let v = d[ch * w * h + i].as_f64();
            pixels.push(round_to_u8(v.clamp(0.0, 1.0) * 255.0));
        }
    }
    ImageBuffer::new(w, h, c, pixels)
}
