//! Beat segmentation, fixed-length resampling and per-beat rescaling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::RecordDoc;

pub const DEFAULT_BEAT_LEN: usize = 64;
pub const DEFAULT_CUTOFF: f64 = 0.75;

/// One heartbeat with its provenance. `samples` are in mV straight after
/// segmentation and unitless in `[-1, 1]` once rescaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatSeries {
    pub record: String,
    pub label: char,
    pub r_peak: usize,
    pub samples: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl BeatSeries {
    pub fn new(record: impl Into<String>, label: char, r_peak: usize, samples: Vec<f64>) -> Self {
        BeatSeries {
            record: record.into(),
            label,
            r_peak,
            samples,
            config_hash: None,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// True when every sample lies in `[-1, 1]` and the minimum is `-1`, or
    /// the beat is the all-zero image of a constant input.
    pub fn is_normalized(&self) -> bool {
        let inside = self.samples.iter().all(|v| (-1.0..=1.0).contains(v));
        let min = self.samples.iter().copied().fold(f64::INFINITY, f64::min);
        inside && (min == -1.0 || self.samples.iter().all(|&v| v == 0.0))
    }
}

/// Half-open sample window `[start, end)` around `r_peak`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: usize,
    pub end: usize,
    pub r_peak: usize,
}

/// Cuts a window around every interior R-peak, reaching `cutoff` of the way
/// to each neighbour. The first and last peaks have only one neighbour and
/// are dropped.
pub fn adaptive_window_segment(
    signal_len: usize,
    r_peaks: &[usize],
    cutoff: f64,
) -> Result<Vec<Window>> {
    if !(cutoff > 0.0 && cutoff < 1.0) {
        return Err(Error::invalid(format!("cutoff must lie in (0, 1), got {cutoff}")));
    }
    if let Some(k) = r_peaks.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::invalid(format!(
            "r-peaks must be strictly increasing (position {})",
            k + 1
        )));
    }
    if let Some(&last) = r_peaks.last() {
        if last >= signal_len {
            return Err(Error::invalid(format!(
                "r-peak {last} outside signal of length {signal_len}"
            )));
        }
    }
    let mut out = Vec::new();
    for w in r_peaks.windows(3) {
        let (prev, r, next) = (w[0] as f64, w[1] as f64, w[2] as f64);
        // f64::round rounds half away from zero
        let start = (r - cutoff * (r - prev)).round() as usize;
        let end = (r + cutoff * (next - r)).round() as usize;
        out.push(Window { start, end, r_peak: w[1] });
    }
    Ok(out)
}

/// Linear interpolation onto `len` evenly spaced points spanning the input.
pub fn resample_linear(beat: &[f64], len: usize) -> Result<Vec<f64>> {
    if len < 2 {
        return Err(Error::invalid(format!("target length must be >= 2, got {len}")));
    }
    if beat.len() < 2 {
        return Err(Error::invalid(format!(
            "beat must have at least 2 samples, got {}",
            beat.len()
        )));
    }
    let n = beat.len();
    let out = (0..len)
        .map(|j| {
            let num = j * (n - 1);
            let den = len - 1;
            let i = num / den;
            if i >= n - 1 {
                return beat[n - 1];
            }
            let frac = (num % den) as f64 / den as f64;
            if frac == 0.0 {
                beat[i]
            } else {
                beat[i] + frac * (beat[i + 1] - beat[i])
            }
        })
        .collect();
    Ok(out)
}

/// Affine map of `[min, max]` onto `[-1, 1]`; a constant beat becomes zeros.
pub fn rescale_unit(beat: &[f64]) -> Vec<f64> {
    let min = beat.iter().copied().fold(f64::INFINITY, f64::min);
    let max = beat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return vec![0.0; beat.len()];
    }
    let span = max - min;
    beat.iter()
        .map(|&v| {
            if v == min {
                -1.0
            } else if v == max {
                1.0
            } else {
                (2.0 * (v - min) / span - 1.0).clamp(-1.0, 1.0)
            }
        })
        .collect()
}

/// Segments one record into normalized beats of length `len`.
///
/// Windows shorter than two samples cannot be resampled and are skipped.
pub fn segment_record(rec: &RecordDoc, len: usize, cutoff: f64) -> Result<Vec<BeatSeries>> {
    let peaks: Vec<usize> = rec.annotations.iter().map(|a| a.sample).collect();
    let windows = adaptive_window_segment(rec.samples.len(), &peaks, cutoff)?;
    let mut beats = Vec::with_capacity(windows.len());
    for (w, ann) in windows.iter().zip(rec.annotations.iter().skip(1)) {
        let end = w.end.min(rec.samples.len());
        if end < w.start + 2 {
            continue;
        }
        let raw = &rec.samples[w.start..end];
        let samples = rescale_unit(&resample_linear(raw, len)?);
        beats.push(BeatSeries::new(rec.record.clone(), ann.label, w.r_peak, samples));
    }
    Ok(beats)
}
