//! Noise-prediction networks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::nn::{prefixed, Conv2d, Dense, Module};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// `ε̂` and, for learned variances, the interpolation weight `v`; both have
/// the shape of `x_t`.
pub struct ModelOutput {
    pub eps: Tensor,
    pub v: Option<Tensor>,
}

pub trait EpsModel {
    /// Predicts noise for a batch `x_t` whose first axis pairs with `t`.
    fn predict(&self, x_t: &Tensor, t: &[usize]) -> Result<ModelOutput>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiserConfig {
    pub channels: usize,
    pub hidden: usize,
    pub time_dim: usize,
    pub learn_sigma: bool,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig { channels: 3, hidden: 32, time_dim: 16, learn_sigma: false }
    }
}

/// Three 3×3 convolutions with SiLU in between; the timestep enters as a
/// learned per-channel bias after each hidden convolution.
pub struct Denoiser {
    pub config: DenoiserConfig,
    conv1: Conv2d,
    conv2: Conv2d,
    conv3: Conv2d,
    time1: Dense,
    time2: Dense,
}

/// Sinusoidal features of integer timesteps: `[B, dim]`.
pub fn timestep_embedding(t: &[usize], dim: usize) -> Tensor {
    let half = dim / 2;
    let mut data = Vec::with_capacity(t.len() * dim);
    for &step in t {
        for k in 0..dim {
            let freq = (-(10_000f64.ln()) * (k % half.max(1)) as f64 / half.max(1) as f64).exp();
            let arg = step as f64 * freq;
            data.push(if k < half { arg.sin() } else { arg.cos() });
        }
    }
    Tensor::new(data, &[t.len(), dim]).expect("embedding shape")
}

impl Denoiser {
    pub fn new<R: Rng + ?Sized>(config: DenoiserConfig, rng: &mut R) -> Result<Self> {
        if config.channels == 0 || config.hidden == 0 || config.time_dim < 2 {
            return Err(Error::Config(format!("invalid denoiser config {config:?}")));
        }
        let out = if config.learn_sigma { 2 * config.channels } else { config.channels };
        Ok(Denoiser {
            config,
            conv1: Conv2d::new(config.channels, config.hidden, 3, 1, 1, rng),
            conv2: Conv2d::new(config.hidden, config.hidden, 3, 1, 1, rng),
            conv3: Conv2d::new(config.hidden, out, 3, 1, 1, rng),
            time1: Dense::new(config.time_dim, config.hidden, rng),
            time2: Dense::new(config.time_dim, config.hidden, rng),
        })
    }
}

impl EpsModel for Denoiser {
    fn predict(&self, x_t: &Tensor, t: &[usize]) -> Result<ModelOutput> {
        let s = x_t.shape();
        if s.len() != 4 || s[1] != self.config.channels || s[0] != t.len() {
            return Err(Error::shape(
                "denoiser",
                format!(
                    "expected [{}, {}, H, W], got {s:?}",
                    t.len(),
                    self.config.channels
                ),
            ));
        }
        let b = s[0];
        let c = self.config.hidden;
        let emb = timestep_embedding(t, self.config.time_dim);
        let tb1 = self.time1.forward(&emb)?.reshape(&[b, c, 1, 1])?;
        let tb2 = self.time2.forward(&emb)?.reshape(&[b, c, 1, 1])?;
        let h = self.conv1.forward(x_t)?.add(&tb1)?.silu();
        let h = self.conv2.forward(&h)?.add(&tb2)?.silu();
        let out = self.conv3.forward(&h)?;
        let ch = self.config.channels;
        if self.config.learn_sigma {
            Ok(ModelOutput { eps: out.slice(1, 0, ch)?, v: Some(out.slice(1, ch, ch)?) })
        } else {
            Ok(ModelOutput { eps: out, v: None })
        }
    }
}

impl Module for Denoiser {
    fn parameters(&self) -> Vec<(String, Tensor)> {
        let mut p = prefixed("conv1", self.conv1.parameters());
        p.extend(prefixed("conv2", self.conv2.parameters()));
        p.extend(prefixed("conv3", self.conv3.parameters()));
        p.extend(prefixed("time1", self.time1.parameters()));
        p.extend(prefixed("time2", self.time2.parameters()));
        p
    }
}
