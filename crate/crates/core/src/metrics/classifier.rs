//! Small 1-D convolutional binary classifier used by the harness.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::nn::{prefixed, Conv1d, Dense};
use crate::autodiff::{optim, Adam, AdamConfig, Module, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub channels: usize,
    pub kernel: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig { channels: 8, kernel: 5, epochs: 15, batch_size: 32, lr: 1e-3 }
    }
}

/// Three (conv → ReLU → average pool by 2) stages and a dense head giving
/// one logit per beat.
pub struct Classifier {
    convs: Vec<Conv1d>,
    head: Dense,
    len: usize,
}

fn avg_pool2(x: &Tensor) -> Result<Tensor> {
    let s = x.shape();
    let (b, c, l) = (s[0], s[1], s[2]);
    x.reshape(&[b, c, l / 2, 2])?.mean_to(&[b, c, l / 2, 1])?.reshape(&[b, c, l / 2])
}

impl Classifier {
    pub fn new(len: usize, cfg: &ClassifierConfig, seed: u64) -> Result<Self> {
        if len == 0 || !len.is_multiple_of(8) {
            return Err(Error::Config(format!("classifier needs a beat length divisible by 8, got {len}")));
        }
        if cfg.channels == 0 || cfg.kernel.is_multiple_of(2) {
            return Err(Error::Config("classifier needs channels > 0 and an odd kernel".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (c, k) = (cfg.channels, cfg.kernel);
        let convs = vec![
            Conv1d::new(1, c, k, 1, k / 2, &mut rng),
            Conv1d::new(c, c, k, 1, k / 2, &mut rng),
            Conv1d::new(c, c, k, 1, k / 2, &mut rng),
        ];
        let head = Dense::new(c * len / 8, 1, &mut rng);
        Ok(Classifier { convs, head, len })
    }

    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        let b = x.shape()[0];
        let mut h = x.clone();
        for conv in &self.convs {
            h = avg_pool2(&conv.forward(&h)?.relu())?;
        }
        let n = h.numel() / b;
        self.head.forward(&h.reshape(&[b, n])?)
    }

    fn batch(&self, beats: &[&[f64]]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(beats.len() * self.len);
        for b in beats {
            if b.len() != self.len {
                return Err(Error::invalid(format!("beat length {} vs classifier {}", b.len(), self.len)));
            }
            data.extend_from_slice(b);
        }
        Tensor::new(data, &[beats.len(), 1, self.len])
    }

    /// Probability of the positive class for each beat.
    pub fn predict(&self, beats: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(beats.len());
        for chunk in beats.chunks(256) {
            let refs: Vec<&[f64]> = chunk.iter().map(Vec::as_slice).collect();
            out.extend(self.logits(&self.batch(&refs)?)?.sigmoid().data().iter());
        }
        Ok(out)
    }

    /// Minimizes binary cross-entropy `softplus(z) - y z` with Adam.
    pub fn fit(&self, beats: &[Vec<f64>], labels: &[u8], cfg: &ClassifierConfig, seed: u64) -> Result<Vec<f64>> {
        if beats.len() != labels.len() || beats.is_empty() {
            return Err(Error::Insufficient("classifier needs labelled training beats".into()));
        }
        let params = self.parameter_tensors();
        let mut opt = Adam::new(&params, AdamConfig { lr: cfg.lr, ..Default::default() });
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..beats.len()).collect();
        let mut epoch_losses = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for idx in order.chunks(cfg.batch_size.max(1)) {
                let refs: Vec<&[f64]> = idx.iter().map(|&i| beats[i].as_slice()).collect();
                let y = Tensor::new(idx.iter().map(|&i| labels[i] as f64).collect(), &[idx.len(), 1])?;
                let z = self.logits(&self.batch(&refs)?)?;
                let loss = z.softplus().sub(&z.mul(&y)?)?.mean();
                let v = loss.item();
                if !v.is_finite() {
                    return Err(Error::Divergence { step: epoch + 1 });
                }
                total += v * idx.len() as f64;
                optim::zero_grads(&params);
                loss.backward()?;
                opt.step(&params)?;
            }
            epoch_losses.push(total / beats.len() as f64);
        }
        Ok(epoch_losses)
    }
}

impl Module for Classifier {
    fn parameters(&self) -> Vec<(String, Tensor)> {
        let mut p = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            p.extend(prefixed(&format!("conv{i}"), c.parameters()));
        }
        p.extend(prefixed("head", self.head.parameters()));
        p
    }
}
