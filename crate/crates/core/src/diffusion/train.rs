//! Denoiser training, checkpointing and ancestral sampling.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gaussian::{mu_coefs, posterior_coefs, sigma_from_v};
use super::losses::{compute_losses, Objective, DEFAULT_LAMBDA_HYBRID};
use super::model::{Denoiser, DenoiserConfig, EpsModel};
use super::sampler::{SamplerKind, TimestepSampler};
use super::schedule::{NoiseSchedule, ScheduleKind};
use crate::autodiff::checkpoint::{self, scalar, scalar_entry, Entry};
use crate::autodiff::{optim, Adam, AdamConfig, Module, Tensor};
use crate::error::{Error, Result};
use crate::imaging::tsim::ImageBatch;

/// One diffusion study configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub learn_sigma: bool,
    pub schedule: ScheduleKind,
    pub objective: Objective,
    pub sampler: SamplerKind,
    #[serde(default = "default_lambda")]
    pub lambda_hybrid: f64,
}

fn default_lambda() -> f64 {
    DEFAULT_LAMBDA_HYBRID
}

impl CaseConfig {
    /// Named study cases `00`, `01` and `02`.
    pub fn case(id: &str) -> Result<Self> {
        let (learn_sigma, schedule, objective, sampler) = match id {
            "00" => (false, ScheduleKind::Linear, Objective::Simple, SamplerKind::Uniform),
            "01" => (true, ScheduleKind::Cosine, Objective::Vlb, SamplerKind::Uniform),
            "02" => (true, ScheduleKind::Cosine, Objective::Vlb, SamplerKind::LossSecondMoment),
            other => return Err(Error::Config(format!("unknown diffusion case `{other}`"))),
        };
        Ok(CaseConfig { learn_sigma, schedule, objective, sampler, lambda_hybrid: DEFAULT_LAMBDA_HYBRID })
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda_hybrid < 0.0 {
            return Err(Error::Config("lambda_hybrid must be >= 0".into()));
        }
        if self.objective == Objective::Hybrid && !self.learn_sigma {
            return Err(Error::Config("hybrid objective requires learn_sigma".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DdpmTrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub diffusion_steps: usize,
    pub hidden: usize,
    pub time_dim: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for DdpmTrainConfig {
    fn default() -> Self {
        DdpmTrainConfig {
            steps: 2000,
            batch_size: 16,
            diffusion_steps: 100,
            hidden: 32,
            time_dim: 16,
            lr: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DdpmTraceRow {
    pub step: usize,
    pub objective: Objective,
    pub loss: f64,
    pub t_mean: f64,
}

pub fn trace_csv(rows: &[DdpmTraceRow]) -> String {
    let mut out = String::from("step,objective,loss,t_mean\n");
    for r in rows {
        out.push_str(&format!("{},{},{:.16e},{:.16e}\n", r.step, r.objective.name(), r.loss, r.t_mean));
    }
    out
}

pub struct DdpmModel {
    pub case: CaseConfig,
    pub schedule: NoiseSchedule,
    pub denoiser: Denoiser,
    pub height: usize,
    pub width: usize,
}

fn code_of_schedule(k: ScheduleKind) -> f64 {
    match k {
        ScheduleKind::Linear => 0.0,
        ScheduleKind::Cosine => 1.0,
    }
}

fn code_of_objective(o: Objective) -> f64 {
    match o {
        Objective::Simple => 0.0,
        Objective::Vlb => 1.0,
        Objective::Hybrid => 2.0,
    }
}

fn code_of_sampler(s: SamplerKind) -> f64 {
    match s {
        SamplerKind::Uniform => 0.0,
        SamplerKind::LossSecondMoment => 1.0,
    }
}

fn as_usize(v: f64, name: &str) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v < u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::invalid(format!("checkpoint field `{name}` is not a count: {v}")))
    }
}

impl DdpmModel {
    pub fn entries(&self) -> Vec<Entry> {
        let c = &self.denoiser.config;
        let mut e = checkpoint::entries_from(&self.denoiser.state());
        for (name, v) in [
            ("hparam.diffusion_steps", self.schedule.steps() as f64),
            ("hparam.schedule", code_of_schedule(self.case.schedule)),
            ("hparam.objective", code_of_objective(self.case.objective)),
            ("hparam.sampler", code_of_sampler(self.case.sampler)),
            ("hparam.lambda_hybrid", self.case.lambda_hybrid),
            ("hparam.learn_sigma", if c.learn_sigma { 1.0 } else { 0.0 }),
            ("hparam.channels", c.channels as f64),
            ("hparam.hidden", c.hidden as f64),
            ("hparam.time_dim", c.time_dim as f64),
            ("hparam.height", self.height as f64),
            ("hparam.width", self.width as f64),
        ] {
            e.push(scalar_entry(name, v));
        }
        e
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, &self.entries())
    }

    pub fn from_entries(entries: &[Entry]) -> Result<Self> {
        let get = |n: &str| scalar(entries, &format!("hparam.{n}"));
        let count = |n: &str| get(n).and_then(|v| as_usize(v, n));
        let schedule_kind = match get("schedule")? as i64 {
            0 => ScheduleKind::Linear,
            1 => ScheduleKind::Cosine,
            k => return Err(Error::invalid(format!("unknown schedule code {k}"))),
        };
        let objective = match get("objective")? as i64 {
            0 => Objective::Simple,
            1 => Objective::Vlb,
            2 => Objective::Hybrid,
            k => return Err(Error::invalid(format!("unknown objective code {k}"))),
        };
        let sampler = match get("sampler")? as i64 {
            0 => SamplerKind::Uniform,
            1 => SamplerKind::LossSecondMoment,
            k => return Err(Error::invalid(format!("unknown sampler code {k}"))),
        };
        let learn_sigma = get("learn_sigma")? != 0.0;
        let case = CaseConfig {
            learn_sigma,
            schedule: schedule_kind,
            objective,
            sampler,
            lambda_hybrid: get("lambda_hybrid")?,
        };
        let config = DenoiserConfig {
            channels: count("channels")?,
            hidden: count("hidden")?,
            time_dim: count("time_dim")?,
            learn_sigma,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let denoiser = Denoiser::new(config, &mut rng)?;
        checkpoint::restore(entries, &denoiser.state())?;
        Ok(DdpmModel {
            case,
            schedule: NoiseSchedule::new(schedule_kind, count("diffusion_steps")?)?,
            denoiser,
            height: count("height")?,
            width: count("width")?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        DdpmModel::from_entries(&checkpoint::load(path)?)
            .map_err(|e| Error::file(path, e.to_string()))
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<ImageBatch> {
        self.sample_with(n, seed, false)
    }

    /// Samples with the `x_0` prediction optionally clamped to `[-1, 1]`,
    /// the range of every embedding channel.
    pub fn sample_with(&self, n: usize, seed: u64, clip_denoised: bool) -> Result<ImageBatch> {
        let c = self.denoiser.config.channels;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = ancestral_sample_clipped(
            &self.denoiser,
            &self.schedule,
            &[n, c, self.height, self.width],
            clip_denoised.then_some((-1.0, 1.0)),
            &mut rng,
        )?;
        ImageBatch::new(c, self.height, self.width, data)
    }
}

/// Fits a denoiser to `data` under `case`; returns the model and a
/// per-step trace.
pub fn train_ddpm(
    data: &ImageBatch,
    case: CaseConfig,
    cfg: &DdpmTrainConfig,
) -> Result<(DdpmModel, Vec<DdpmTraceRow>)> {
    case.validate()?;
    if data.is_empty() {
        return Err(Error::Insufficient("no training images".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let schedule = NoiseSchedule::new(case.schedule, cfg.diffusion_steps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let denoiser = Denoiser::new(
        DenoiserConfig {
            channels: data.channels,
            hidden: cfg.hidden,
            time_dim: cfg.time_dim,
            learn_sigma: case.learn_sigma,
        },
        &mut rng,
    )?;
    let params = denoiser.parameter_tensors();
    let mut opt = Adam::new(&params, AdamConfig { lr: cfg.lr, ..Default::default() });
    let mut sampler = TimestepSampler::new(case.sampler, cfg.diffusion_steps);
    let per = data.image_len();
    let shape = [cfg.batch_size, data.channels, data.height, data.width];
    let mut trace = Vec::with_capacity(cfg.steps);

    for step in 1..=cfg.steps {
        let mut x0 = Vec::with_capacity(cfg.batch_size * per);
        for _ in 0..cfg.batch_size {
            x0.extend_from_slice(data.image(rng.random_range(0..data.len())));
        }
        let (t, w): (Vec<usize>, Vec<f64>) = (0..cfg.batch_size).map(|_| sampler.draw(&mut rng)).unzip();
        let noise = Tensor::randn(&shape, 1.0, &mut rng);
        let x0 = Tensor::new(x0, &shape)?;
        let out = compute_losses(
            &denoiser,
            &schedule,
            case.objective,
            case.lambda_hybrid,
            &x0,
            &t,
            &w,
            &noise,
        )?;
        let loss = out.loss.item();
        if !loss.is_finite() {
            return Err(Error::Divergence { step });
        }
        optim::zero_grads(&params);
        out.loss.backward()?;
        opt.step(&params)?;
        for (&tb, &lb) in t.iter().zip(&out.per_sample) {
            sampler.update(tb, lb)?;
        }
        trace.push(DdpmTraceRow {
            step,
            objective: case.objective,
            loss,
            t_mean: t.iter().sum::<usize>() as f64 / t.len() as f64,
        });
    }
    let model = DdpmModel { case, schedule, denoiser, height: data.height, width: data.width };
    Ok((model, trace))
}

/// Runs the learned reverse chain from `x_T ~ N(0, I)` down to `x_0`. No
/// noise is added on the last step. Without a learned variance the step
/// variance is `β̃_t`.
pub fn ancestral_sample<R: Rng + ?Sized>(
    model: &dyn EpsModel,
    s: &NoiseSchedule,
    shape: &[usize],
    rng: &mut R,
) -> Result<Vec<f64>> {
    ancestral_sample_clipped(model, s, shape, None, rng)
}

/// [`ancestral_sample`] with an optional clamp on the implied `x_0`
/// prediction. With `clip = Some((lo, hi))` each step's mean is the
/// posterior mean given `clamp(x̂_0, lo, hi)`, where
/// `x̂_0 = (x_t - √(1-ᾱ_t)·ε̂) / √ᾱ_t`; this equals `μ_θ` whenever the
/// clamp is inactive.
pub fn ancestral_sample_clipped<R: Rng + ?Sized>(
    model: &dyn EpsModel,
    s: &NoiseSchedule,
    shape: &[usize],
    clip: Option<(f64, f64)>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let b = shape[0];
    let x = Tensor::randn(shape, 1.0, rng);
    let mut x = x.to_vec();
    let d = x.len() / b.max(1);
    for t in (1..=s.steps()).rev() {
        let xt = Tensor::new(x.clone(), shape)?;
        let out = model.predict(&xt, &vec![t; b])?;
        let eps = out.eps.data();
        let (ra, ec) = mu_coefs(s, t);
        let (c0, ct) = posterior_coefs(s, t);
        let (sa, sb) = (s.alpha_bar(t).sqrt(), (1.0 - s.alpha_bar(t)).sqrt());
        let var: Vec<f64> = match &out.v {
            Some(v) => sigma_from_v(s, &v.data(), t)?,
            None => vec![s.log_beta_tilde_clipped(t).exp(); x.len()],
        };
        for i in 0..b * d {
            let mu = match clip {
                None => ra * (x[i] - ec * eps[i]),
                Some((lo, hi)) => c0 * ((x[i] - sb * eps[i]) / sa).clamp(lo, hi) + ct * x[i],
            };
            x[i] = if t > 1 {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                mu + var[i].sqrt() * z
            } else {
                mu
            };
        }
    }
    Ok(x)
}
