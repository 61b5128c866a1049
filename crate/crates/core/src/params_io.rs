//! Versioned binary parameter files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic [4]u8 | version u16 | config_len u32 | config utf-8 (key=value lines)
//! count u32 | count × ( name_len u16 | name | rank u8 | dims rank×u32 | values f64… )
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::optim::ModelParams;
use crate::scalar::Real;
use crate::tensor::Tensor;

pub const FORMAT_VERSION: u16 = 1;

pub fn encode_params<T: Real>(magic: &[u8; 4], config: &str, params: &ModelParams<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + params.num_values() * 8);
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(config.as_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.rank() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::ModelFormat(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn string(&mut self, n: usize) -> Result<String> {
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::ModelFormat("non-UTF-8 text".into()))
    }
}

/// Returns the embedded config text and the parameters.
pub fn decode_params<T: Real>(bytes: &[u8], magic: &[u8; 4]) -> Result<(String, ModelParams<T>)> {
    let mut r = Reader { bytes, pos: 0 };
    let found = r.take(4).map_err(|_| Error::ModelFormat("file too short".into()))?;
    if found != magic {
        return Err(Error::ModelFormat(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(found)
        )));
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!("unsupported version {version}")));
    }
    let config_len = r.u32()? as usize;
    let config = r.string(config_len)?;
    let count = r.u32()?;
    let mut params = ModelParams::new();
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = r.string(name_len)?;
        let rank = r.u8()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::ModelFormat("tensor too large".into()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().unwrap())))
            .collect();
        let tensor = Tensor::new(&shape, data).map_err(|e| Error::ModelFormat(format!("`{name}`: {e}")))?;
        params.push(name, tensor);
    }
    if r.pos != bytes.len() {
        return Err(Error::ModelFormat(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok((config, params))
}

pub fn write_params_file<T: Real>(path: impl AsRef<Path>, magic: &[u8; 4], config: &str, params: &ModelParams<T>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_params(magic, config, params)).map_err(|e| Error::io(path, e))
}

pub fn read_params_file<T: Real>(path: impl AsRef<Path>, magic: &[u8; 4]) -> Result<(String, ModelParams<T>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_params(&bytes, magic)
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_owned(), v.trim().to_owned()))
                .ok_or_else(|| Error::InvalidArgument(format!("expected key=value, got `{l}`")))
        })
        .collect()
}
