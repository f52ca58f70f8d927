//! Shape distances between beats and a linear-kernel MMD.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Dtw,
    Frechet,
}

fn nonempty(a: &[f64], b: &[f64], op: &str) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid(format!("{op}: empty input")));
    }
    Ok(())
}

/// Accumulated `|a_i - b_j|` along the cheapest monotone warping path with
/// unit steps.
pub fn dtw(a: &[f64], b: &[f64]) -> Result<f64> {
    nonempty(a, b, "dtw")?;
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for &ai in a {
        cur[0] = f64::INFINITY;
        for j in 1..=m {
            let best = prev[j].min(cur[j - 1]).min(prev[j - 1]);
            cur[j] = (ai - b[j - 1]).abs() + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m])
}

/// Discrete Fréchet distance: the smallest achievable maximum `|a_i - b_j|`
/// over monotone couplings.
pub fn frechet_discrete(a: &[f64], b: &[f64]) -> Result<f64> {
    nonempty(a, b, "frechet_discrete")?;
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![0.0; m];
    for (i, &ai) in a.iter().enumerate() {
        for j in 0..m {
            let d = (ai - b[j]).abs();
            cur[j] = match (i, j) {
                (0, 0) => d,
                (0, _) => cur[j - 1].max(d),
                (_, 0) => prev[0].max(d),
                _ => prev[j].min(cur[j - 1]).min(prev[j - 1]).max(d),
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}

pub fn distance(metric: Metric, a: &[f64], b: &[f64]) -> Result<f64> {
    match metric {
        Metric::Dtw => dtw(a, b),
        Metric::Frechet => frechet_discrete(a, b),
    }
}

pub fn avg_distance_to_template(set: &[Vec<f64>], template: &[f64], metric: Metric) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Insufficient("no beats to compare with the template".into()));
    }
    let mut total = 0.0;
    for beat in set {
        total += distance(metric, beat, template)?;
    }
    Ok(total / set.len() as f64)
}

fn mean_vector(x: &[Vec<f64>], d: usize) -> Result<Vec<f64>> {
    let mut m = vec![0.0; d];
    for row in x {
        if row.len() != d {
            return Err(Error::shape("mmd_linear", format!("dimension {} vs {d}", row.len())));
        }
        m.iter_mut().zip(row).for_each(|(a, b)| *a += b);
    }
    m.iter_mut().for_each(|v| *v /= x.len() as f64);
    Ok(m)
}

/// Biased squared MMD under `k(x, y) = x·y`, which reduces to the squared
/// distance between sample means.
pub fn mmd_linear(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Insufficient("mmd_linear needs at least one sample per set".into()));
    }
    let d = x[0].len();
    let mx = mean_vector(x, d)?;
    let my = mean_vector(y, d)?;
    Ok(mx.iter().zip(&my).map(|(a, b)| (a - b).powi(2)).sum())
}
