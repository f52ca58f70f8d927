//! Writes the small synthetic ECG records under `fixtures/`.
//!
//! Each record is two-channel format 212 at 360 Hz with an annotation CSV.
//! Normal beats (`N`) have a narrow QRS complex and an upright T wave;
//! bundle-branch-block beats (`L`) have a wide, notched QRS and an inverted
//! T wave.
//!
//! Run with `cargo run -p beatsynth --example make_fixtures [out_dir]`.

use std::f64::consts::PI;
use std::fs;
use std::path::PathBuf;

use beatsynth::ingest::{encode_format212, DEFAULT_GAIN, DEFAULT_SAMPLING_RATE_HZ};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const SECONDS: usize = 45;

fn bump(t: f64, centre: f64, width: f64, height: f64) -> f64 {
    height * (-0.5 * ((t - centre) / width).powi(2)).exp()
}

/// Millivolt waveform of one beat, `t` in seconds relative to the R peak.
fn beat_mv(t: f64, label: char, scale: f64) -> f64 {
    let p = bump(t, -0.2, 0.025, 0.15);
    match label {
        'N' => p + bump(t, -0.03, 0.01, -0.12) + bump(t, 0.0, 0.012, 1.2 * scale) + bump(t, 0.035, 0.012, -0.25) + bump(t, 0.28, 0.05, 0.3),
        _ => p + bump(t, -0.02, 0.03, 0.8 * scale) + bump(t, 0.045, 0.03, 0.7 * scale) + bump(t, 0.3, 0.06, -0.35),
    }
}

fn record(seed: u64, l_share: f64) -> (Vec<i32>, Vec<i32>, Vec<(usize, char)>) {
    let fs = DEFAULT_SAMPLING_RATE_HZ as f64;
    let n = SECONDS * DEFAULT_SAMPLING_RATE_HZ as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.01).expect("valid sigma");
    let mut peaks = Vec::new();
    let mut t = 0.5 + rng.random_range(0.0..0.3);
    while t < SECONDS as f64 - 0.5 {
        let label = if rng.random_bool(l_share) { 'L' } else { 'N' };
        peaks.push((t, label, rng.random_range(0.85..1.15)));
        t += rng.random_range(0.7..0.95);
    }
    let mut mv = vec![0.0; n];
    for (i, v) in mv.iter_mut().enumerate() {
        let ti = i as f64 / fs;
        *v = 0.05 * (2.0 * PI * 0.3 * ti).sin() + noise.sample(&mut rng);
        for &(tp, label, scale) in &peaks {
            if (ti - tp).abs() < 0.6 {
                *v += beat_mv(ti - tp, label, scale);
            }
        }
    }
    let adc = |v: f64| ((v * DEFAULT_GAIN).round() as i32).clamp(-2048, 2047);
    let a: Vec<i32> = mv.iter().map(|&v| adc(v)).collect();
    let b: Vec<i32> = mv.iter().map(|&v| adc(0.6 * v)).collect();
    let ann = peaks.iter().map(|&(tp, label, _)| ((tp * fs).round() as usize, label)).collect();
    (a, b, ann)
}

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures"));
    fs::create_dir_all(&out)?;
    for (name, seed, l_share) in [("f100", 100, 0.2), ("f101", 101, 0.7)] {
        let (a, b, ann) = record(seed, l_share);
        fs::write(out.join(format!("{name}.dat")), encode_format212(&a, &b)?)?;
        let mut w = csv::Writer::from_path(out.join(format!("{name}.csv")))?;
        w.write_record(["sample", "label"])?;
        for (s, l) in ann {
            w.write_record([s.to_string(), l.to_string()])?;
        }
        w.flush()?;
    }
    Ok(())
}
