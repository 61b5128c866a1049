use std::fs;
use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};

use super::ImageBuffer;

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImageFormat {
    Png,
    /// Binary PPM (P6) for RGB, binary PGM (P5) for gray.
    Pnm,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("png") => Ok(ImageFormat::Png),
            Some("ppm") | Some("pgm") | Some("pnm") => Ok(ImageFormat::Pnm),
            _ => Err(Error::UnsupportedFormat(format!(
                "{} (expected .png, .ppm or .pgm)",
                path.display()
            ))),
        }
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

/// Decodes PNG or binary PNM, sniffing the format from the leading bytes.
pub fn decode_image(bytes: &[u8]) -> Result<ImageBuffer> {
    if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        decode_pnm(bytes)
    } else if bytes.len() >= 2 && bytes[0] == b'P' && bytes[1].is_ascii_digit() {
        Err(Error::UnsupportedFormat(format!(
            "PNM variant P{} (only binary P5/P6 are supported)",
            bytes[1] as char
        )))
    } else if bytes.len() < 2 || PNG_SIGNATURE.starts_with(bytes) {
        Err(Error::CorruptHeader("file too short to identify".into()))
    } else {
        Err(Error::UnsupportedFormat("unrecognized image signature".into()))
    }
}

/// Writes PNG or PNM depending on the extension. `.ppm` needs RGB, `.pgm` gray.
pub fn save_image(image: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = match ImageFormat::from_path(path)? {
        ImageFormat::Png => encode_png(image)?,
        ImageFormat::Pnm => {
            let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
            match (ext.as_str(), image.channels()) {
                ("ppm", 1) => {
                    return Err(Error::UnsupportedFormat(
                        "PPM needs a 3-channel image; use .pgm for gray".into(),
                    ))
                }
                ("pgm", 3) => {
                    return Err(Error::UnsupportedFormat(
                        "PGM needs a 1-channel image; use .ppm for RGB".into(),
                    ))
                }
                _ => encode_pnm(image),
            }
        }
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn encode_pnm(image: &ImageBuffer) -> Vec<u8> {
    let magic = if image.channels() == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.pixels());
    out
}

fn decode_pnm(bytes: &[u8]) -> Result<ImageBuffer> {
    let channels = if bytes[1] == b'6' { 3 } else { 1 };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::CorruptHeader("PNM header ends early".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::CorruptHeader(format!("expected a number at byte {start}")));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::CorruptHeader("PNM header number out of range".into()))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::CorruptHeader("missing separator after maxval".into()));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(Error::CorruptHeader(format!("invalid dimensions {width}×{height}")));
    }
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!("PNM maxval {maxval} (only 255 is supported)")));
    }
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::CorruptHeader("PNM dimensions overflow".into()))?;
    let data = &bytes[pos..];
    if data.len() < need {
        return Err(Error::CorruptHeader(format!(
            "truncated PNM: header promises {need} bytes, found {}",
            data.len()
        )));
    }
    ImageBuffer::new(width, height, channels, data[..need].to_vec())
}

fn png_err(e: png::DecodingError) -> Error {
    match e {
        png::DecodingError::IoError(io) => Error::CorruptHeader(format!("truncated PNG: {io}")),
        other => Error::CorruptHeader(format!("PNG: {other}")),
    }
}

fn decode_png(bytes: &[u8]) -> Result<ImageBuffer> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(png_err)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::CorruptHeader("PNG dimensions overflow".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    buf.truncate(info.buffer_size());
    let (w, h) = (info.width as usize, info.height as usize);
    let pixels = match info.color_type {
        png::ColorType::Grayscale => return ImageBuffer::new(w, h, 1, buf),
        png::ColorType::Rgb => return ImageBuffer::new(w, h, 3, buf),
        png::ColorType::GrayscaleAlpha => buf.chunks_exact(2).map(|p| p[0]).collect(),
        png::ColorType::Rgba => buf.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        png::ColorType::Indexed => {
            return Err(Error::UnsupportedFormat("unexpanded palette PNG".into()))
        }
    };
    let channels = if info.color_type == png::ColorType::GrayscaleAlpha { 1 } else { 3 };
    ImageBuffer::new(w, h, channels, pixels)
}

pub fn encode_png(image: &ImageBuffer) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, image.width() as u32, image.height() as u32);
        encoder.set_color(if image.channels() == 3 {
            png::ColorType::Rgb
        } else {
            png::ColorType::Grayscale
        });
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| Error::InvalidArgument(format!("PNG encode: {e}")))?;
        writer
            .write_image_data(image.pixels())
            .map_err(|e| Error::InvalidArgument(format!("PNG encode: {e}")))?;
    }
    Ok(out)
}
