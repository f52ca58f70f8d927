//! Beat-to-image embedding (GASF, GADF, MTF) and its inverse.

pub mod tsim;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::BeatSeries;

pub const DEFAULT_BINS: usize = 8;
/// Generated diagonals may leave `[-1, 1]`; beyond this margin a beat is
/// flagged.
pub const RANGE_TOLERANCE: f64 = 0.05;
pub const CHANNELS: usize = 3;
const DOMAIN_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct PolarSeries {
    pub phi: Vec<f64>,
    pub r: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MtfConfig {
    pub bins: usize,
}

impl Default for MtfConfig {
    fn default() -> Self {
        MtfConfig { bins: DEFAULT_BINS }
    }
}

/// `3 × n × n` stack in channel order (GASF, GADF, MTF), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagingTensor {
    pub n: usize,
    pub data: Vec<f64>,
    pub record: String,
    pub label: char,
    pub r_peak: usize,
}

impl ImagingTensor {
    pub fn channel(&self, c: usize) -> &[f64] {
        let p = self.n * self.n;
        &self.data[c * p..(c + 1) * p]
    }
}

pub fn to_polar(x: &[f64]) -> Result<PolarSeries> {
    let n = x.len();
    let mut phi = Vec::with_capacity(n);
    for (i, &v) in x.iter().enumerate() {
        if !(v.abs() <= 1.0 + DOMAIN_SLACK) {
            return Err(Error::Domain(format!("sample {i} = {v} outside [-1, 1]")));
        }
        phi.push(v.clamp(-1.0, 1.0).acos());
    }
    let r = (1..=n).map(|i| i as f64 / n as f64).collect();
    Ok(PolarSeries { phi, r })
}

/// `cos(φ_i/2 + φ_j/2)`
pub fn gasf(phi: &[f64]) -> Vec<f64> {
    let n = phi.len();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        out[i * n + i] = phi[i].cos();
        for j in 0..i {
            let v = (phi[i] / 2.0 + phi[j] / 2.0).cos();
            out[i * n + j] = v;
            out[j * n + i] = v;
        }
    }
    out
}

/// `cos(φ_i/2 - φ_j/2)`. This half-angle difference form is symmetric with
/// a unit diagonal, unlike the antisymmetric sine variant.
pub fn gadf(phi: &[f64]) -> Vec<f64> {
    let n = phi.len();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        out[i * n + i] = 1.0;
        for j in 0..i {
            let v = (phi[i] / 2.0 - phi[j] / 2.0).cos();
            out[i * n + j] = v;
            out[j * n + i] = v;
        }
    }
    out
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Bin index of every sample, with interior edges at the `j/Q` quantiles.
/// Bins are right-inclusive: a value equal to an edge falls below it.
pub fn quantile_bins(x: &[f64], q: usize) -> Vec<usize> {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let edges: Vec<f64> = (1..q).map(|j| quantile_sorted(&sorted, j as f64 / q as f64)).collect();
    x.iter()
        .map(|&v| edges.iter().filter(|&&e| v > e).count())
        .collect()
}

/// Row-stochastic transition matrix between consecutive bins. Rows never
/// visited are uniform.
pub fn transition_matrix(bins: &[usize], q: usize) -> Vec<f64> {
    let mut w = vec![0.0; q * q];
    for k in bins.windows(2) {
        w[k[0] * q + k[1]] += 1.0;
    }
    for row in w.chunks_mut(q) {
        let total: f64 = row.iter().sum();
        if total == 0.0 {
            row.fill(1.0 / q as f64);
        } else {
            row.iter_mut().for_each(|v| *v /= total);
        }
    }
    w
}

pub fn mtf(x: &[f64], cfg: MtfConfig) -> Result<Vec<f64>> {
    let n = x.len();
    let q = cfg.bins;
    if n < 2 {
        return Err(Error::invalid(format!("MTF needs at least 2 samples, got {n}")));
    }
    if q < 2 || q > n {
        return Err(Error::invalid(format!("MTF bins must lie in [2, {n}], got {q}")));
    }
    let bins = quantile_bins(x, q);
    let w = transition_matrix(&bins, q);
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = w[bins[i] * q + bins[j]];
        }
    }
    Ok(out)
}

pub fn embed_samples(x: &[f64], cfg: MtfConfig) -> Result<Vec<f64>> {
    let polar = to_polar(x)?;
    let mut data = gasf(&polar.phi);
    data.extend(gadf(&polar.phi));
    data.extend(mtf(x, cfg)?);
    Ok(data)
}

pub fn embed(beat: &BeatSeries, cfg: MtfConfig) -> Result<ImagingTensor> {
    Ok(ImagingTensor {
        n: beat.len(),
        data: embed_samples(&beat.samples, cfg)?,
        record: beat.record.clone(),
        label: beat.label,
        r_peak: beat.r_peak,
    })
}

/// Diagonal of the GASF channel, clamped to `[-1, 1]`, together with how far
/// the raw diagonal strayed outside that interval.
pub fn deembed_channel(gasf: &[f64], n: usize) -> Result<(Vec<f64>, f64)> {
    if n == 0 || gasf.len() != n * n {
        return Err(Error::shape(
            "deembed",
            format!("GASF channel of {} values is not {n}×{n}", gasf.len()),
        ));
    }
    let mut violation: f64 = 0.0;
    let diag = (0..n)
        .map(|i| {
            let v = gasf[i * n + i];
            violation = violation.max(v.abs() - 1.0);
            v.clamp(-1.0, 1.0)
        })
        .collect();
    Ok((diag, violation.max(0.0)))
}

pub fn deembed(img: &ImagingTensor) -> Result<BeatSeries> {
    if img.data.len() < img.n * img.n {
        return Err(Error::shape("deembed", "missing GASF channel"));
    }
    let (samples, _) = deembed_channel(img.channel(0), img.n)?;
    Ok(BeatSeries::new(img.record.clone(), img.label, img.r_peak, samples))
}

pub fn is_flagged(violation: f64) -> bool {
    violation > RANGE_TOLERANCE
}

/// Inverts the polar map: `x = cos φ`.
pub fn from_polar(phi: &[f64]) -> Vec<f64> {
    phi.iter().map(|p| p.cos()).collect()
}

/// Angles outside `[0, π]` are not produced by [`to_polar`].
pub fn phi_in_range(phi: &[f64]) -> bool {
    phi.iter().all(|p| (0.0..=PI).contains(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn polar_examples() {
        let p = to_polar(&[1.0, -1.0, 0.0]).unwrap();
        assert_eq!(p.phi[0], 0.0);
        assert_eq!(p.phi[1], PI);
        assert!((p.phi[2] - PI / 2.0).abs() < 1e-15);
        assert_eq!(p.r, vec![1.0 / 3.0, 2.0 / 3.0, 1.0]);
        assert!(to_polar(&[1.0 + 1e-10]).is_ok());
        assert!(matches!(to_polar(&[1.01]), Err(Error::Domain(_))));
        assert!(to_polar(&[f64::NAN]).is_err());
    }

    #[test]
    fn gasf_examples() {
        assert!(gasf(&[0.0; 4]).iter().all(|&v| v == 1.0));
        let g = gasf(&[0.0, PI]);
        let expect = [1.0, 0.0, 0.0, -1.0];
        for (a, b) in g.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn gadf_examples() {
        let g = gadf(&[0.0, PI]);
        let expect = [1.0, 0.0, 0.0, 1.0];
        for (a, b) in g.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn mtf_constant_beat_is_all_ones() {
        for q in [2, 5, 8] {
            assert!(mtf(&[0.3; 16], MtfConfig { bins: q }).unwrap().iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn mtf_alternating_is_checkerboard() {
        let x = [-1.0, 1.0, -1.0, 1.0];
        assert_eq!(quantile_bins(&x, 2), vec![0, 1, 0, 1]);
        assert_eq!(transition_matrix(&[0, 1, 0, 1], 2), vec![0.0, 1.0, 1.0, 0.0]);
        let m = mtf(&x, MtfConfig { bins: 2 }).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m[i * 4 + j], if (i + j) % 2 == 1 { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn mtf_bin_range_checked() {
        assert!(mtf(&[0.0, 1.0, 0.5], MtfConfig { bins: 1 }).is_err());
        assert!(mtf(&[0.0, 1.0, 0.5], MtfConfig { bins: 4 }).is_err());
    }

    #[test]
    fn zero_beat_embeds_to_zero_gasf() {
        let b = BeatSeries::new("r", 'N', 0, vec![0.0; 64]);
        let img = embed(&b, MtfConfig::default()).unwrap();
        assert_eq!(img.data.len(), 3 * 64 * 64);
        assert!(img.channel(0).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn deembed_clamps_and_measures_violation() {
        let (d, v) = deembed_channel(&[1.03, 0.0, 0.0, -0.5], 2).unwrap();
        assert_eq!(d, vec![1.0, -0.5]);
        assert!((v - 0.03).abs() < 1e-12 && !is_flagged(v));
        assert!(deembed_channel(&[0.0; 6], 2).is_err());
    }

    fn unit_beat() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1.0f64..=1.0, 2..48)
    }

    proptest! {
        #[test]
        fn embedding_invariants(x in unit_beat(), q in 2usize..8) {
            let n = x.len();
            prop_assume!(q <= n);
            let data = embed_samples(&x, MtfConfig { bins: q }).unwrap();
            let p = n * n;
            let (gs, gd, m) = (&data[..p], &data[p..2 * p], &data[2 * p..]);
            for i in 0..n {
                prop_assert!((gs[i * n + i] - x[i]).abs() <= 1e-12);
                prop_assert!((gd[i * n + i] - 1.0).abs() <= 1e-12);
                for j in 0..n {
                    prop_assert_eq!(gs[i * n + j], gs[j * n + i]);
                }
            }
            prop_assert!(gs.iter().chain(gd).all(|v| (-1.0..=1.0).contains(v)));
            prop_assert!(m.iter().all(|v| (0.0..=1.0).contains(v)));
            let bins = quantile_bins(&x, q);
            let w = transition_matrix(&bins, q);
            for row in w.chunks(q) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            let (back, _) = deembed_channel(gs, n).unwrap();
            for (a, b) in back.iter().zip(&x) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }

        #[test]
        fn polar_angles_invert(x in unit_beat()) {
            let p = to_polar(&x).unwrap();
            prop_assert!(phi_in_range(&p.phi));
            for (a, b) in from_polar(&p.phi).iter().zip(&x) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
