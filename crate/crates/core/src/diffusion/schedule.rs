use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const COSINE_OFFSET: f64 = 0.008;
pub const MAX_BETA: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Linear,
    Cosine,
}

/// Per-step noise variances and derived products.
///
/// Steps are 1-based: `beta(t)` for `t` in `1..=T`. `alpha_bar(0)` is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub kind: ScheduleKind,
    pub s: f64,
    beta: Vec<f64>,
    alpha_bar: Vec<f64>,
    beta_tilde: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(kind: ScheduleKind, steps: usize) -> Result<Self> {
        match kind {
            ScheduleKind::Linear => linear_schedule(steps),
            ScheduleKind::Cosine => cosine_schedule(steps, COSINE_OFFSET),
        }
    }

    fn from_betas(kind: ScheduleKind, s: f64, beta: Vec<f64>) -> Self {
        let mut alpha_bar = Vec::with_capacity(beta.len() + 1);
        alpha_bar.push(1.0);
        for b in &beta {
            let prev = *alpha_bar.last().unwrap();
            alpha_bar.push(prev * (1.0 - b));
        }
        let beta_tilde = (1..=beta.len())
            .map(|t| (1.0 - alpha_bar[t - 1]) / (1.0 - alpha_bar[t]) * beta[t - 1])
            .collect();
        NoiseSchedule { kind, s, beta, alpha_bar, beta_tilde }
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.beta[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    /// Posterior variance; zero at `t = 1`.
    pub fn beta_tilde(&self, t: usize) -> f64 {
        self.beta_tilde[t - 1]
    }

    /// Lower end of the learned-variance interpolation: `β̃_t`, except at
    /// `t = 1` where `β̃_1 = 0` and `β_1` is used instead.
    pub fn log_beta_tilde_clipped(&self, t: usize) -> f64 {
        if t == 1 {
            self.beta(1).ln()
        } else {
            self.beta_tilde(t).ln()
        }
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    /// `ᾱ_0..=ᾱ_T`.
    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::invalid(format!("step {t} outside 1..={}", self.steps())));
        }
        Ok(())
    }
}

/// Betas evenly spaced from `1e-4·(1000/T)` to `0.02·(1000/T)`, capped at
/// 0.999.
pub fn linear_schedule(steps: usize) -> Result<NoiseSchedule> {
    if steps < 1 {
        return Err(Error::invalid("schedule needs at least one step"));
    }
    let scale = 1000.0 / steps as f64;
    let (lo, hi) = (1e-4 * scale, 0.02 * scale);
    let beta = if steps == 1 {
        vec![((lo + hi) / 2.0).min(MAX_BETA)]
    } else {
        (0..steps)
            .map(|i| {
                let f = i as f64 / (steps - 1) as f64;
                (lo * (1.0 - f) + hi * f).min(MAX_BETA)
            })
            .collect()
    };
    Ok(NoiseSchedule::from_betas(ScheduleKind::Linear, 0.0, beta))
}

/// `f(t) = cos²(((t/T + s)/(1 + s))·π/2)`, unnormalized.
pub fn cosine_f(t: f64, steps: usize, s: f64) -> f64 {
    (((t / steps as f64 + s) / (1.0 + s)) * FRAC_PI_2).cos().powi(2)
}

pub fn cosine_schedule(steps: usize, s: f64) -> Result<NoiseSchedule> {
    if steps < 1 {
        return Err(Error::invalid("schedule needs at least one step"));
    }
    let f0 = cosine_f(0.0, steps, s);
    let abar = |t: usize| cosine_f(t as f64, steps, s) / f0;
    let beta = (1..=steps)
        .map(|t| (1.0 - abar(t) / abar(t - 1)).min(MAX_BETA))
        .collect();
    Ok(NoiseSchedule::from_betas(ScheduleKind::Cosine, s, beta))
}
