//! Raw record decoding, annotation loading and dataset splitting.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::BeatSeries;

pub const DEFAULT_SAMPLING_RATE_HZ: u32 = 360;
/// ADC units per mV when a record does not say otherwise.
pub const DEFAULT_GAIN: f64 = 200.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub record_id: String,
    pub sampling_rate_hz: u32,
    /// ADC units, one vector per channel.
    pub channels: Vec<Vec<i32>>,
    pub gain: f64,
}

impl RawRecord {
    pub fn new(
        record_id: impl Into<String>,
        sampling_rate_hz: u32,
        channels: Vec<Vec<i32>>,
        gain: f64,
    ) -> Result<Self> {
        if sampling_rate_hz == 0 {
            return Err(Error::invalid("sampling rate must be positive"));
        }
        if !(gain > 0.0 && gain.is_finite()) {
            return Err(Error::invalid(format!("gain must be positive, got {gain}")));
        }
        if channels.windows(2).any(|w| w[0].len() != w[1].len()) {
            return Err(Error::invalid("channels differ in length"));
        }
        Ok(RawRecord {
            record_id: record_id.into(),
            sampling_rate_hz,
            channels,
            gain,
        })
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// First channel converted to mV.
    pub fn channel_a_mv(&self) -> Vec<f64> {
        self.channels
            .first()
            .map(|c| c.iter().map(|&v| v as f64 / self.gain).collect())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub sample: usize,
    pub label: char,
}

/// Record-level dataset line: channel A in mV plus its annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordDoc {
    pub record: String,
    pub sampling_rate_hz: u32,
    pub gain: f64,
    pub samples: Vec<f64>,
    pub annotations: Vec<Annotation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl RecordDoc {
    pub fn from_raw(raw: &RawRecord, annotations: Vec<Annotation>) -> Result<Self> {
        if let Some(a) = annotations.iter().find(|a| a.sample >= raw.len()) {
            return Err(Error::invalid(format!(
                "annotation at sample {} beyond record length {}",
                a.sample,
                raw.len()
            )));
        }
        Ok(RecordDoc {
            record: raw.record_id.clone(),
            sampling_rate_hz: raw.sampling_rate_hz,
            gain: raw.gain,
            samples: raw.channel_a_mv(),
            annotations,
            config_hash: None,
        })
    }
}

fn sign_extend_12(v: u16) -> i32 {
    let v = (v & 0x0FFF) as i32;
    if v & 0x800 != 0 {
        v - 0x1000
    } else {
        v
    }
}

/// Unpacks `n_samples` interleaved samples (two per 3-byte frame) into the
/// two channel vectors.
pub fn decode_format212(bytes: &[u8], n_samples: usize) -> Result<(Vec<i32>, Vec<i32>)> {
    if !n_samples.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "sample count must be even (two channels per frame), got {n_samples}"
        )));
    }
    let frames = n_samples / 2;
    let needed = frames * 3;
    if bytes.len() < needed {
        let offset = bytes.len() - bytes.len() % 3;
        return Err(Error::Decode {
            offset,
            msg: format!("truncated frame: need {needed} bytes, have {}", bytes.len()),
        });
    }
    let mut a = Vec::with_capacity(frames);
    let mut b = Vec::with_capacity(frames);
    for f in bytes[..needed].chunks_exact(3) {
        let (b0, b1, b2) = (f[0] as u16, f[1] as u16, f[2] as u16);
        a.push(sign_extend_12(b0 | ((b1 & 0x0F) << 8)));
        b.push(sign_extend_12(b2 | ((b1 >> 4) << 8)));
    }
    Ok((a, b))
}

/// Packs two equal-length channels of 12-bit samples into frames.
pub fn encode_format212(a: &[i32], b: &[i32]) -> Result<Vec<u8>> {
    if a.len() != b.len() {
        return Err(Error::invalid("channels differ in length"));
    }
    let mut out = Vec::with_capacity(a.len() * 3);
    for (&x, &y) in a.iter().zip(b) {
        for v in [x, y] {
            if !(-2048..=2047).contains(&v) {
                return Err(Error::Domain(format!("{v} does not fit in 12 bits")));
            }
        }
        let (x, y) = ((x & 0x0FFF) as u16, (y & 0x0FFF) as u16);
        out.push((x & 0xFF) as u8);
        out.push(((x >> 8) | ((y >> 8) << 4)) as u8);
        out.push((y & 0xFF) as u8);
    }
    Ok(out)
}

/// Decodes a whole `.dat` file; a trailing partial frame is an error.
pub fn read_format212(path: &Path) -> Result<(Vec<i32>, Vec<i32>)> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::file(path, e.to_string()))?;
    if bytes.len() % 3 != 0 {
        return Err(Error::Decode {
            offset: bytes.len() - bytes.len() % 3,
            msg: format!("{}: trailing partial frame", path.display()),
        });
    }
    decode_format212(&bytes, bytes.len() / 3 * 2)
}

#[derive(Deserialize)]
struct AnnRow {
    sample: usize,
    label: String,
}

/// Parses `sample,label` rows. Row numbers in errors count data rows from 1.
pub fn parse_annotations<R: Read>(reader: R) -> Result<Vec<Annotation>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Format { row: 0, msg: e.to_string() })?
        .clone();
    if headers.len() != 2 || &headers[0] != "sample" || &headers[1] != "label" {
        return Err(Error::Format {
            row: 0,
            msg: format!("expected header `sample,label`, got `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut out: Vec<Annotation> = Vec::new();
    for (i, row) in rdr.deserialize::<AnnRow>().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| Error::Format { row: row_no, msg: e.to_string() })?;
        let mut chars = row.label.chars();
        let label = match (chars.next(), chars.next()) {
            (Some(c), None) => c,
            _ => {
                return Err(Error::Format {
                    row: row_no,
                    msg: format!("label must be one character, got `{}`", row.label),
                })
            }
        };
        if let Some(prev) = out.last() {
            if row.sample <= prev.sample {
                return Err(Error::Format {
                    row: row_no,
                    msg: format!("sample {} not after previous {}", row.sample, prev.sample),
                });
            }
        }
        out.push(Annotation { sample: row.sample, label });
    }
    Ok(out)
}

pub fn load_annotations_csv(path: &Path) -> Result<Vec<Annotation>> {
    let f = fs::File::open(path).map_err(|e| Error::file(path, e.to_string()))?;
    parse_annotations(f)
}

/// Stratified, seeded split into disjoint train and test sets.
///
/// Each class contributes `round(train · n_c)` training beats and
/// `round(test · n_c)` test beats (capped by what is left). When the
/// fractions sum to 1 every beat lands in exactly one set. Both sets keep
/// the input order.
pub fn split_dataset(
    beats: &[BeatSeries],
    seed: u64,
    fractions: (f64, f64),
) -> Result<(Vec<BeatSeries>, Vec<BeatSeries>)> {
    let (ftrain, ftest) = fractions;
    if beats.is_empty() {
        return Err(Error::Insufficient("cannot split an empty dataset".into()));
    }
    if !(ftrain > 0.0 && ftest > 0.0 && ftrain + ftest <= 1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "fractions must be positive and sum to at most 1, got ({ftrain}, {ftest})"
        )));
    }
    let complete = ftrain + ftest >= 1.0 - 1e-12;
    let mut by_class: BTreeMap<char, Vec<usize>> = BTreeMap::new();
    for (i, b) in beats.iter().enumerate() {
        by_class.entry(b.label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for idx in by_class.values_mut() {
        idx.shuffle(&mut rng);
        let n = idx.len();
        let n_train = ((ftrain * n as f64).round() as usize).min(n);
        let n_test = if complete {
            n - n_train
        } else {
            ((ftest * n as f64).round() as usize).min(n - n_train)
        };
        train_idx.extend_from_slice(&idx[..n_train]);
        test_idx.extend_from_slice(&idx[n_train..n_train + n_test]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((
        train_idx.iter().map(|&i| beats[i].clone()).collect(),
        test_idx.iter().map(|&i| beats[i].clone()).collect(),
    ))
}
