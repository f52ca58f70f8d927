//! `TSIM` image-batch files.
//!
//! ```text
//! "TSIM" | u8 version | u32 channels | u32 height | u32 width | u32 batch
//! f64 values, little-endian, per image channel-major then row-major
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TSIM";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 4 * 4;

#[derive(Debug, Clone, PartialEq)]
pub struct ImageBatch {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// `batch × channels × height × width` values.
    pub data: Vec<f64>,
}

impl ImageBatch {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        let per = channels * height * width;
        if per == 0 || !data.len().is_multiple_of(per) {
            return Err(Error::shape(
                "image_batch",
                format!("{} values do not form {channels}×{height}×{width} images", data.len()),
            ));
        }
        Ok(ImageBatch { channels, height, width, data })
    }

    pub fn image_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.image_len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let k = self.image_len();
        &self.data[i * k..(i + 1) * k]
    }
}

pub fn encode(batch: &ImageBatch) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + batch.data.len() * 8);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    for v in [batch.channels, batch.height, batch.width, batch.len()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in &batch.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<ImageBatch> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Decode { offset: bytes.len(), msg: "header truncated".into() });
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Decode { offset: 0, msg: "bad magic, expected TSIM".into() });
    }
    if bytes[4] != VERSION {
        return Err(Error::Decode {
            offset: 4,
            msg: format!("unsupported version {}", bytes[4]),
        });
    }
    let field = |k: usize| {
        let at = 5 + 4 * k;
        u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize
    };
    let (c, h, w, n) = (field(0), field(1), field(2), field(3));
    let count = c * h * w * n;
    let body = &bytes[HEADER_LEN..];
    if body.len() != count * 8 {
        return Err(Error::Decode {
            offset: HEADER_LEN + body.len().min(count * 8),
            msg: format!("expected {count} values, found {} bytes", body.len()),
        });
    }
    let data = body
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    if c * h * w == 0 {
        return Err(Error::Decode { offset: 5, msg: "zero-sized image".into() });
    }
    Ok(ImageBatch { channels: c, height: h, width: w, data })
}

pub fn write(path: &Path, batch: &ImageBatch) -> Result<()> {
    fs::write(path, encode(batch)).map_err(|e| Error::file(path, e.to_string()))
}

pub fn read(path: &Path) -> Result<ImageBatch> {
    let bytes = fs::read(path).map_err(|e| Error::file(path, e.to_string()))?;
    decode(&bytes).map_err(|e| Error::file(path, e.to_string()))
}
