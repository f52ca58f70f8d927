//! Timestep samplers for the diffusion objectives.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HISTORY_LEN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    Uniform,
    LossSecondMoment,
}

/// Draws timesteps uniformly until every step has a full loss history, then
/// proportionally to the root mean square of that history.
#[derive(Debug, Clone)]
pub struct ImportanceSampler {
    steps: usize,
    history: Vec<VecDeque<f64>>,
}

impl ImportanceSampler {
    pub fn new(steps: usize) -> Self {
        ImportanceSampler {
            steps,
            history: vec![VecDeque::with_capacity(HISTORY_LEN); steps],
        }
    }

    pub fn is_warm(&self) -> bool {
        self.history.iter().all(|h| h.len() == HISTORY_LEN)
    }

    /// Current `p_t` for `t = 1..=T`.
    pub fn probabilities(&self) -> Vec<f64> {
        let uniform = vec![1.0 / self.steps as f64; self.steps];
        if !self.is_warm() {
            return uniform;
        }
        let w: Vec<f64> = self
            .history
            .iter()
            .map(|h| (h.iter().map(|l| l * l).sum::<f64>() / h.len() as f64).sqrt())
            .collect();
        let total: f64 = w.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return uniform;
        }
        w.iter().map(|v| v / total).collect()
    }

    /// Returns `(t, weight)` with `weight = 1 / (p_t · T)`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, f64) {
        if !self.is_warm() {
            return (rng.random_range(1..=self.steps), 1.0);
        }
        let p = self.probabilities();
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = self.steps;
        for (i, pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                pick = i + 1;
                break;
            }
        }
        // skip zero-probability steps that rounding at the tail could select
        while p[pick - 1] == 0.0 && pick > 1 {
            pick -= 1;
        }
        (pick, 1.0 / (p[pick - 1] * self.steps as f64))
    }

    pub fn update(&mut self, t: usize, loss: f64) -> Result<()> {
        if t == 0 || t > self.steps {
            return Err(Error::invalid(format!("step {t} outside 1..={}", self.steps)));
        }
        let h = &mut self.history[t - 1];
        if h.len() == HISTORY_LEN {
            h.pop_front();
        }
        h.push_back(loss);
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum TimestepSampler {
    Uniform { steps: usize },
    Importance(ImportanceSampler),
}

impl TimestepSampler {
    pub fn new(kind: SamplerKind, steps: usize) -> Self {
        match kind {
            SamplerKind::Uniform => TimestepSampler::Uniform { steps },
            SamplerKind::LossSecondMoment => TimestepSampler::Importance(ImportanceSampler::new(steps)),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, f64) {
        match self {
            TimestepSampler::Uniform { steps } => (rng.random_range(1..=*steps), 1.0),
            TimestepSampler::Importance(s) => s.draw(rng),
        }
    }

    pub fn update(&mut self, t: usize, loss: f64) -> Result<()> {
        match self {
            TimestepSampler::Uniform { steps } => {
                if t == 0 || t > *steps {
                    return Err(Error::invalid(format!("step {t} outside 1..={steps}")));
                }
                Ok(())
            }
            TimestepSampler::Importance(s) => s.update(t, loss),
        }
    }
}
