//! Adversarial training loop, checkpoints and sampling.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::losses::{critic_loss, generator_loss, GpConfig};
use super::models::{Critic, CriticConfig, Generator, GeneratorConfig};
use crate::autodiff::checkpoint::{self, scalar, scalar_entry, Entry};
use crate::autodiff::{optim, Adam, AdamConfig, Mode, Module, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WganTrainConfig {
    /// Generator updates.
    pub steps: usize,
    pub n_critic: usize,
    pub batch_size: usize,
    pub gp: GpConfig,
    pub adam: AdamConfig,
    pub generator: GeneratorConfig,
    pub critic: CriticConfig,
    pub seed: u64,
}

impl Default for WganTrainConfig {
    fn default() -> Self {
        WganTrainConfig {
            steps: 2000,
            n_critic: 5,
            batch_size: 16,
            gp: GpConfig::default(),
            adam: AdamConfig { lr: 1e-4, beta1: 0.0, beta2: 0.9, eps: 1e-8 },
            generator: GeneratorConfig::default(),
            critic: CriticConfig::default(),
            seed: 0,
        }
    }
}

impl WganTrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.gp.validate()?;
        self.generator.validate()?;
        self.critic.validate()?;
        if self.n_critic == 0 || self.batch_size == 0 {
            return Err(Error::Config("n_critic and batch_size must be positive".into()));
        }
        if self.generator.output_len != self.critic.input_len {
            return Err(Error::Config(format!(
                "generator emits length {} but critic expects {}",
                self.generator.output_len, self.critic.input_len
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WganTraceRow {
    pub step: usize,
    pub w_estimate: f64,
    pub d_loss: f64,
    pub g_loss: f64,
}

pub fn trace_csv(rows: &[WganTraceRow]) -> String {
    let mut out = String::from("step,w_estimate,d_loss,g_loss\n");
    for r in rows {
        out.push_str(&format!("{},{:.16e},{:.16e},{:.16e}\n", r.step, r.w_estimate, r.d_loss, r.g_loss));
    }
    out
}

pub struct WganModel {
    pub generator: Generator,
    pub critic: Critic,
}

fn count(entries: &[Entry], name: &str) -> Result<usize> {
    let v = scalar(entries, &format!("hparam.{name}"))?;
    if v >= 0.0 && v.fract() == 0.0 && v < u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::invalid(format!("checkpoint field `{name}` is not a count: {v}")))
    }
}

fn widths(entries: &[Entry], prefix: &str) -> Result<[usize; 4]> {
    let mut w = [0; 4];
    for (i, slot) in w.iter_mut().enumerate() {
        *slot = count(entries, &format!("{prefix}_width.{i}"))?;
    }
    Ok(w)
}

impl WganModel {
    pub fn new<R: Rng + ?Sized>(g: GeneratorConfig, c: CriticConfig, rng: &mut R) -> Result<Self> {
        Ok(WganModel { generator: Generator::new(g, rng)?, critic: Critic::new(c, rng)? })
    }

    pub fn entries(&self) -> Vec<Entry> {
        let mut e = checkpoint::entries_from(&checkpoint_names("generator", self.generator.state()));
        e.extend(checkpoint::entries_from(&checkpoint_names("critic", self.critic.state())));
        let g = &self.generator.config;
        let c = &self.critic.config;
        e.push(scalar_entry("hparam.latent_dim", g.latent_dim as f64));
        e.push(scalar_entry("hparam.output_len", g.output_len as f64));
        e.push(scalar_entry("hparam.input_len", c.input_len as f64));
        for i in 0..4 {
            e.push(scalar_entry(&format!("hparam.generator_width.{i}"), g.widths[i] as f64));
            e.push(scalar_entry(&format!("hparam.critic_width.{i}"), c.widths[i] as f64));
        }
        e
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, &self.entries())
    }

    pub fn from_entries(entries: &[Entry]) -> Result<Self> {
        let g = GeneratorConfig {
            latent_dim: count(entries, "latent_dim")?,
            widths: widths(entries, "generator")?,
            output_len: count(entries, "output_len")?,
        };
        let c = CriticConfig { widths: widths(entries, "critic")?, input_len: count(entries, "input_len")? };
        let model = WganModel::new(g, c, &mut ChaCha8Rng::seed_from_u64(0))?;
        checkpoint::restore(entries, &checkpoint_names("generator", model.generator.state()))?;
        checkpoint::restore(entries, &checkpoint_names("critic", model.critic.state()))?;
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        WganModel::from_entries(&checkpoint::load(path)?).map_err(|e| Error::file(path, e.to_string()))
    }

    /// Draws `n` beats from the generator in evaluation mode.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        generate(&self.generator, n, Mode::Eval, &mut rng)
    }
}

fn checkpoint_names(prefix: &str, state: Vec<(String, Tensor)>) -> Vec<(String, Tensor)> {
    crate::autodiff::nn::prefixed(prefix, state)
}

fn latent<R: Rng + ?Sized>(g: &Generator, n: usize, rng: &mut R) -> Tensor {
    Tensor::randn(&[n, g.config.latent_dim, 1], 1.0, rng)
}

/// Runs the generator on `n` standard-normal latents.
pub fn generate<R: Rng + ?Sized>(g: &Generator, n: usize, mode: Mode, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let out = g.forward(&latent(g, n, rng), mode)?;
    Ok(out.data().chunks(g.config.output_len).map(<[f64]>::to_vec).collect())
}

fn real_batch<R: Rng + ?Sized>(beats: &[Vec<f64>], b: usize, len: usize, rng: &mut R) -> Result<Tensor> {
    let mut data = Vec::with_capacity(b * len);
    for _ in 0..b {
        data.extend_from_slice(&beats[rng.random_range(0..beats.len())]);
    }
    Tensor::new(data, &[b, 1, len])
}

/// Alternates `n_critic` critic updates with one generator update.
pub fn train_wgan_gp(beats: &[Vec<f64>], cfg: &WganTrainConfig) -> Result<(WganModel, Vec<WganTraceRow>)> {
    cfg.validate()?;
    if beats.is_empty() {
        return Err(Error::Insufficient("no training beats".into()));
    }
    let len = cfg.generator.output_len;
    if let Some(bad) = beats.iter().position(|b| b.len() != len) {
        return Err(Error::invalid(format!("beat {bad} has length {}, expected {len}", beats[bad].len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = WganModel::new(cfg.generator.clone(), cfg.critic.clone(), &mut rng)?;
    let g_params = model.generator.parameter_tensors();
    let d_params = model.critic.parameter_tensors();
    let mut g_opt = Adam::new(&g_params, cfg.adam);
    let mut d_opt = Adam::new(&d_params, cfg.adam);
    let b = cfg.batch_size;
    let mut trace = Vec::with_capacity(cfg.steps);

    for step in 1..=cfg.steps {
        let mut last = (0.0, 0.0);
        for _ in 0..cfg.n_critic {
            let real = real_batch(beats, b, len, &mut rng)?;
            let fake = model.generator.forward(&latent(&model.generator, b, &mut rng), Mode::Train)?.detach();
            let out = critic_loss(&model.critic, &real, &fake, &cfg.gp, &mut rng)?;
            let d_loss = out.loss.item();
            if !d_loss.is_finite() {
                return Err(Error::Divergence { step });
            }
            optim::zero_grads(&d_params);
            out.loss.backward()?;
            d_opt.step(&d_params)?;
            last = (out.w_estimate, d_loss);
        }
        let fake = model.generator.forward(&latent(&model.generator, b, &mut rng), Mode::Train)?;
        let g_loss = generator_loss(&model.critic, &fake)?;
        let g_value = g_loss.item();
        if !g_value.is_finite() {
            return Err(Error::Divergence { step });
        }
        optim::zero_grads(&g_params);
        g_loss.backward()?;
        g_opt.step(&g_params)?;
        trace.push(WganTraceRow { step, w_estimate: last.0, d_loss: last.1, g_loss: g_value });
    }
    Ok((model, trace))
}
