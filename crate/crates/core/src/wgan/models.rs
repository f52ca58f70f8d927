//! Generator and critic networks over 1-D beats.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::nn::{instance_norm, prefixed, BatchNorm1d, Conv1d, ConvTranspose1d, Dense, Mode, Module};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const LATENT_DIM: usize = 100;
pub const BEAT_LEN: usize = 64;
pub const LEAKY_SLOPE: f64 = 0.2;
pub const INSTANCE_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub latent_dim: usize,
    /// Channel widths of the four upsampling blocks.
    pub widths: [usize; 4],
    pub output_len: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig { latent_dim: LATENT_DIM, widths: [256, 128, 64, 32], output_len: BEAT_LEN }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticConfig {
    /// Widths of the first convolution and the three normalized blocks.
    pub widths: [usize; 4],
    pub input_len: usize,
}

impl Default for CriticConfig {
    fn default() -> Self {
        CriticConfig { widths: [32, 64, 128, 256], input_len: BEAT_LEN }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.output_len < 2 || self.widths.contains(&0) {
            return Err(Error::Config(format!("invalid generator config {self:?}")));
        }
        Ok(())
    }
}

impl CriticConfig {
    /// The input length must be a multiple of 16 and at least 64.
    pub fn validate(&self) -> Result<()> {
        if self.widths.contains(&0) || self.input_len < 64 || !self.input_len.is_multiple_of(16) {
            return Err(Error::Config(format!("invalid critic config {self:?}")));
        }
        Ok(())
    }
}

/// Four (transposed conv k4 s2 p1 → batch norm → ReLU) blocks taking length
/// 1 to 16, a final transposed conv to one channel of length 32, then a
/// dense map to the beat length and tanh.
pub struct Generator {
    pub config: GeneratorConfig,
    blocks: Vec<(ConvTranspose1d, BatchNorm1d)>,
    last: ConvTranspose1d,
    head: Dense,
}

impl Generator {
    pub fn new<R: Rng + ?Sized>(config: GeneratorConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut blocks = Vec::new();
        let mut in_ch = config.latent_dim;
        for &w in &config.widths {
            blocks.push((ConvTranspose1d::new(in_ch, w, 4, 2, 1, rng), BatchNorm1d::new(w)));
            in_ch = w;
        }
        let last = ConvTranspose1d::new(in_ch, 1, 4, 2, 1, rng);
        let head = Dense::new(32, config.output_len, rng);
        Ok(Generator { config, blocks, last, head })
    }

    /// `z: [B, latent, 1]` → `[B, 1, output_len]`.
    pub fn forward(&self, z: &Tensor, mode: Mode) -> Result<Tensor> {
        let s = z.shape();
        if s.len() != 3 || s[1] != self.config.latent_dim || s[2] != 1 {
            return Err(Error::shape(
                "generator",
                format!("expected [B, {}, 1], got {s:?}", self.config.latent_dim),
            ));
        }
        let b = s[0];
        let mut h = z.clone();
        for (conv, bn) in &self.blocks {
            h = bn.forward(&conv.forward(&h)?, mode)?.relu();
        }
        let h = self.last.forward(&h)?;
        let len = h.shape()[2];
        let y = self.head.forward(&h.reshape(&[b, len])?)?.tanh();
        y.reshape(&[b, 1, self.config.output_len])
    }
}

impl Module for Generator {
    fn parameters(&self) -> Vec<(String, Tensor)> {
        let mut p = Vec::new();
        for (i, (conv, bn)) in self.blocks.iter().enumerate() {
            p.extend(prefixed(&format!("block{i}.conv"), conv.parameters()));
            p.extend(prefixed(&format!("block{i}.bn"), bn.parameters()));
        }
        p.extend(prefixed("last", self.last.parameters()));
        p.extend(prefixed("head", self.head.parameters()));
        p
    }

    fn buffers(&self) -> Vec<(String, Tensor)> {
        let mut b = Vec::new();
        for (i, (_, bn)) in self.blocks.iter().enumerate() {
            b.extend(prefixed(&format!("block{i}.bn"), bn.buffers()));
        }
        b
    }
}

/// Strided convolution with LeakyReLU, three (strided conv → instance norm
/// → LeakyReLU) blocks, a final unstrided convolution and a dense map to one
/// unbounded score per beat.
pub struct Critic {
    pub config: CriticConfig,
    first: Conv1d,
    blocks: Vec<Conv1d>,
    last: Conv1d,
    head: Dense,
}

impl Critic {
    pub fn new<R: Rng + ?Sized>(config: CriticConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let w = config.widths;
        let first = Conv1d::new(1, w[0], 4, 2, 1, rng);
        let blocks = (1..4).map(|i| Conv1d::new(w[i - 1], w[i], 4, 2, 1, rng)).collect();
        let last = Conv1d::new(w[3], 1, 4, 1, 0, rng);
        let head = Dense::new(config.input_len / 16 - 3, 1, rng);
        Ok(Critic { config, first, blocks, last, head })
    }

    /// `x: [B, 1, L]` → `[B, 1]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let s = x.shape();
        if s.len() != 3 || s[1] != 1 || s[2] != self.config.input_len {
            return Err(Error::shape(
                "critic",
                format!("expected [B, 1, {}], got {s:?}", self.config.input_len),
            ));
        }
        let b = s[0];
        let mut h = self.first.forward(x)?.leaky_relu(LEAKY_SLOPE);
        for conv in &self.blocks {
            h = instance_norm(&conv.forward(&h)?, INSTANCE_NORM_EPS)?.leaky_relu(LEAKY_SLOPE);
        }
        let h = self.last.forward(&h)?;
        let len = h.shape()[2];
        self.head.forward(&h.reshape(&[b, len])?)
    }
}

impl Module for Critic {
    fn parameters(&self) -> Vec<(String, Tensor)> {
        let mut p = prefixed("first", self.first.parameters());
        for (i, conv) in self.blocks.iter().enumerate() {
            p.extend(prefixed(&format!("block{i}"), conv.parameters()));
        }
        p.extend(prefixed("last", self.last.parameters()));
        p.extend(prefixed("head", self.head.parameters()));
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_gen() -> GeneratorConfig {
        GeneratorConfig { widths: [16, 8, 8, 4], ..Default::default() }
    }

    #[test]
    fn generator_shapes_and_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = Generator::new(GeneratorConfig::default(), &mut rng).unwrap();
        let z = Tensor::randn(&[16, 100, 1], 1.0, &mut rng);
        let y = g.forward(&z, Mode::Train).unwrap();
        assert_eq!(y.shape(), &[16, 1, 64]);
        assert!(y.data().iter().all(|v| v.abs() < 1.0));
        assert_eq!(g.forward(&z, Mode::Eval).unwrap().shape(), &[16, 1, 64]);
        assert!(g.forward(&Tensor::zeros(&[2, 99, 1]), Mode::Eval).is_err());
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = Generator::new(small_gen(), &mut rng).unwrap();
        for (_, p) in g.parameters() {
            p.set_data(vec![0.0; p.numel()]).unwrap();
        }
        let z = Tensor::randn(&[4, 100, 1], 1.0, &mut rng);
        assert!(g.forward(&z, Mode::Train).unwrap().data().iter().all(|&v| v == 0.0));

        let c = Critic::new(CriticConfig { widths: [4, 4, 8, 8], input_len: 64 }, &mut rng).unwrap();
        for (_, p) in c.parameters() {
            p.set_data(vec![0.0; p.numel()]).unwrap();
        }
        let x = Tensor::randn(&[3, 1, 64], 1.0, &mut rng);
        assert!(c.forward(&x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn generator_is_deterministic_for_fixed_latent() {
        let g = Generator::new(small_gen(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let z = Tensor::randn(&[3, 100, 1], 1.0, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(g.forward(&z, Mode::Eval).unwrap().to_vec(), g.forward(&z, Mode::Eval).unwrap().to_vec());
    }

    #[test]
    fn critic_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = Critic::new(CriticConfig::default(), &mut rng).unwrap();
        let x = Tensor::new((0..16 * 64).map(|i| ((i % 64) as f64 / 32.0) - 1.0).collect(), &[16, 1, 64]).unwrap();
        let y = c.forward(&x).unwrap();
        assert_eq!(y.shape(), &[16, 1]);
        assert!(y.data().iter().all(|v| v.is_finite()));
        assert!(c.forward(&Tensor::zeros(&[1, 1, 32])).is_err());
    }

    #[test]
    fn transposed_conv_lengths_follow_the_shape_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = ConvTranspose1d::new(4, 4, 4, 2, 1, &mut rng);
        let mut len = 1;
        for _ in 0..4 {
            let x = Tensor::zeros(&[1, 4, len]);
            let out = c.forward(&x).unwrap().shape()[2];
            assert_eq!(out, c.output_len(len));
            assert_eq!(out, 2 * len);
            len = out;
        }
        assert_eq!(len, 16);
    }
}
