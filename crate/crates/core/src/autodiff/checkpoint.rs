//! `TSNN` checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "TSNN" | u8 version | u32 entries
//! per entry: u32 name_len | name (UTF-8) | u32 rank | u32 dims[rank] | f64 values[prod(dims)]
//! ```

use std::fs;
use std::path::Path;

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TSNN";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

pub fn encode(entries: &[Entry]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for e in entries {
        out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
        out.extend_from_slice(e.name.as_bytes());
        out.extend_from_slice(&(e.shape.len() as u32).to_le_bytes());
        for &d in &e.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &e.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Decode {
                offset: self.pos,
                msg: format!("checkpoint truncated, wanted {n} more bytes"),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<Entry>> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::Decode {
            offset: 0,
            msg: "bad magic, expected TSNN".into(),
        });
    }
    let version = c.take(1)?[0];
    if version != VERSION {
        return Err(Error::Decode {
            offset: 4,
            msg: format!("unsupported checkpoint version {version}"),
        });
    }
    let n = c.u32()? as usize;
    let mut entries = Vec::with_capacity(n);
    for _ in 0..n {
        let len = c.u32()? as usize;
        let at = c.pos;
        let name = String::from_utf8(c.take(len)?.to_vec()).map_err(|_| Error::Decode {
            offset: at,
            msg: "parameter name is not UTF-8".into(),
        })?;
        let rank = c.u32()? as usize;
        let shape = (0..rank)
            .map(|_| c.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let count: usize = shape.iter().product();
        let raw = c.take(count * 8)?;
        let values = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        entries.push(Entry { name, shape, values });
    }
    Ok(entries)
}

pub fn entries_from(state: &[(String, Tensor)]) -> Vec<Entry> {
    state
        .iter()
        .map(|(name, t)| Entry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            values: t.to_vec(),
        })
        .collect()
}

pub fn save(path: &Path, entries: &[Entry]) -> Result<()> {
    fs::write(path, encode(entries)).map_err(|e| Error::file(path, e.to_string()))
}

pub fn load(path: &Path) -> Result<Vec<Entry>> {
    let bytes = fs::read(path).map_err(|e| Error::file(path, e.to_string()))?;
    decode(&bytes).map_err(|e| Error::file(path, e.to_string()))
}

/// Copies stored values into `state` by name; every tensor must be present
/// with a matching shape.
pub fn restore(entries: &[Entry], state: &[(String, Tensor)]) -> Result<()> {
    for (name, t) in state {
        let e = entries
            .iter()
            .find(|e| &e.name == name)
            .ok_or_else(|| Error::invalid(format!("checkpoint has no tensor `{name}`")))?;
        if e.shape != t.shape() {
            return Err(Error::shape(
                "restore",
                format!("`{name}`: stored {:?}, model {:?}", e.shape, t.shape()),
            ));
        }
        t.set_data(e.values.clone())?;
    }
    Ok(())
}

/// Reads a scalar entry (used for hyperparameters stored next to weights).
pub fn scalar(entries: &[Entry], name: &str) -> Result<f64> {
    entries
        .iter()
        .find(|e| e.name == name && e.values.len() == 1)
        .map(|e| e.values[0])
        .ok_or_else(|| Error::invalid(format!("checkpoint has no scalar `{name}`")))
}

pub fn scalar_entry(name: &str, v: f64) -> Entry {
    Entry {
        name: name.to_string(),
        shape: vec![],
        values: vec![v],
    }
}
