//! Training objectives.
//!
//! All variational terms are averaged over elements and measured in nats.
//! The `t = 1` decoder term is the negative log-density of `x0` under a
//! continuous Gaussian: embedded images are real-valued, so there is no
//! pixel discretization to integrate over.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::gaussian::{gaussian_kl, gaussian_nll, mu_coefs, posterior_coefs};
use super::model::EpsModel;
use super::schedule::NoiseSchedule;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_LAMBDA_HYBRID: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Simple,
    Vlb,
    Hybrid,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::Simple => "simple",
            Objective::Vlb => "vlb",
            Objective::Hybrid => "hybrid",
        }
    }
}

/// `L_T = KL(q(x_T | x0) ‖ N(0, I))`, averaged over elements.
pub fn prior_kl(s: &NoiseSchedule, x0: &[f64]) -> f64 {
    let t = s.steps();
    let ab = s.alpha_bar(t);
    let var = 1.0 - ab;
    x0.iter()
        .map(|x| gaussian_kl(ab.sqrt() * x, var, 0.0, 1.0).expect("positive variance"))
        .sum::<f64>()
        / x0.len() as f64
}

/// `L_{t-1}` for one example given the model's prediction: the posterior KL
/// for `t >= 2`, the decoder negative log-likelihood at `t = 1`.
pub fn vlb_term(
    s: &NoiseSchedule,
    x0: &[f64],
    x_t: &[f64],
    t: usize,
    eps_hat: &[f64],
    v: Option<&[f64]>,
) -> Result<f64> {
    s.check_step(t)?;
    let n = x0.len();
    if x_t.len() != n || eps_hat.len() != n || v.is_some_and(|v| v.len() != n) {
        return Err(Error::shape("vlb_term", "inputs differ in length"));
    }
    let (c0, ct) = posterior_coefs(s, t);
    let (ra, ec) = mu_coefs(s, t);
    let (lb, lbt) = (s.beta(t).ln(), s.log_beta_tilde_clipped(t));
    let mut acc = 0.0;
    for i in 0..n {
        let mu = ra * (x_t[i] - ec * eps_hat[i]);
        let var = match v {
            Some(v) => (v[i] * lb + (1.0 - v[i]) * lbt).exp(),
            None => lbt.exp(),
        };
        acc += if t == 1 {
            gaussian_nll(x0[i], mu, var)
        } else {
            gaussian_kl(c0 * x0[i] + ct * x_t[i], s.beta_tilde(t), mu, var)?
        };
    }
    Ok(acc / n as f64)
}

pub struct LossOutput {
    /// Scalar to minimize.
    pub loss: Tensor,
    /// Per-example value fed back to the timestep sampler.
    pub per_sample: Vec<f64>,
    /// Unweighted batch mean of `‖ε - ε̂‖²` per element.
    pub simple: f64,
    /// Batch mean of the variational estimate, when computed.
    pub vlb: Option<f64>,
}

/// Per-example constant of shape `[B, 1, …]` matching `like`'s rank.
fn per_example(values: Vec<f64>, like: &[usize]) -> Tensor {
    let mut shape = vec![1; like.len()];
    shape[0] = values.len();
    Tensor::new(values, &shape).expect("per-example shape")
}

fn mean_per_example(x: &Tensor) -> Result<Tensor> {
    let b = x.shape()[0];
    let d = x.numel() / b;
    x.reshape(&[b, d])?.mean_to(&[b, 1])
}

/// Evaluates `objective` on a batch.
///
/// `t` and `weights` come from the timestep sampler; `noise` is the `ε`
/// used to form `x_t`. The variational estimate per example is
/// `L_T + T·w·L_{t-1}`, which is unbiased for the full bound. With
/// [`Objective::Hybrid`] the variational branch sees a detached `ε̂`, so it
/// only trains the variance output.
#[allow(clippy::too_many_arguments)]
pub fn compute_losses(
    model: &dyn EpsModel,
    s: &NoiseSchedule,
    objective: Objective,
    lambda: f64,
    x0: &Tensor,
    t: &[usize],
    weights: &[f64],
    noise: &Tensor,
) -> Result<LossOutput> {
    if lambda < 0.0 {
        return Err(Error::Config(format!("hybrid weight must be >= 0, got {lambda}")));
    }
    let shape = x0.shape().to_vec();
    let b = shape[0];
    if t.len() != b || weights.len() != b || noise.shape() != shape.as_slice() {
        return Err(Error::shape("compute_losses", "batch, timesteps, weights and noise disagree"));
    }
    for &step in t {
        s.check_step(step)?;
    }
    let d = x0.numel() / b;
    let x0d = x0.data();
    let nd = noise.data();
    let mut xt = Vec::with_capacity(x0d.len());
    for (k, &step) in t.iter().enumerate() {
        let (a, c) = (s.alpha_bar(step).sqrt(), (1.0 - s.alpha_bar(step)).sqrt());
        for i in k * d..(k + 1) * d {
            xt.push(a * x0d[i] + c * nd[i]);
        }
    }
    let x_t = Tensor::new(xt.clone(), &shape)?;
    let out = model.predict(&x_t, t)?;
    if out.eps.shape() != shape.as_slice() {
        return Err(Error::shape("compute_losses", format!("model returned {:?}", out.eps.shape())));
    }

    let mse = mean_per_example(&noise.sub(&out.eps)?.square())?;
    let mse_vals = mse.to_vec();
    let simple = mse_vals.iter().sum::<f64>() / b as f64;
    let w = per_example(weights.to_vec(), &[b, 1]);
    let weighted_simple = mse.mul(&w)?.mean();

    if objective == Objective::Simple {
        return Ok(LossOutput { loss: weighted_simple, per_sample: mse_vals, simple, vlb: None });
    }
    if objective == Objective::Hybrid && out.v.is_none() {
        return Err(Error::Config("hybrid objective needs a learned variance".into()));
    }

    let col = |f: &dyn Fn(usize) -> f64| per_example(t.iter().map(|&s| f(s)).collect(), &shape);
    let (c0, ct) = (col(&|k| posterior_coefs(s, k).0), col(&|k| posterior_coefs(s, k).1));
    let (ra, ec) = (col(&|k| mu_coefs(s, k).0), col(&|k| mu_coefs(s, k).1));
    let lb = col(&|k| s.beta(k).ln());
    let lbt = col(&|k| s.log_beta_tilde_clipped(k));
    let is_first = col(&|k| if k == 1 { 1.0 } else { 0.0 });
    let not_first = col(&|k| if k == 1 { 0.0 } else { 1.0 });

    let eps_in = if objective == Objective::Hybrid { out.eps.detach() } else { out.eps.clone() };
    let mu_true = x0.mul(&c0)?.add(&x_t.mul(&ct)?)?;
    let mu = x_t.sub(&eps_in.mul(&ec)?)?.mul(&ra)?;
    let logvar = match &out.v {
        Some(v) => v.mul(&lb.sub(&lbt)?)?.add(&lbt)?,
        None => lbt.expand(&shape)?,
    };
    let inv_var = logvar.neg().exp();
    let kl = logvar
        .sub(&lbt)?
        .add(&lbt.sub(&logvar)?.exp())?
        .add(&mu_true.sub(&mu)?.square().mul(&inv_var)?)?
        .add_scalar(-1.0)
        .scale(0.5);
    let nll = logvar
        .add(&x0.sub(&mu)?.square().mul(&inv_var)?)?
        .add_scalar((2.0 * PI).ln())
        .scale(0.5);
    let term = mean_per_example(&kl.mul(&not_first)?.add(&nll.mul(&is_first)?)?)?;
    let per_sample = term.to_vec();

    let steps = s.steps() as f64;
    let prior: Vec<f64> = (0..b).map(|k| prior_kl(s, &x0d[k * d..(k + 1) * d])).collect();
    let scale = per_example(weights.iter().map(|w| steps * w).collect(), &[b, 1]);
    let vlb_ps = term.mul(&scale)?.add(&per_example(prior, &[b, 1]))?;
    let vlb = vlb_ps.mean();
    let vlb_value = vlb.item();
    let loss = match objective {
        Objective::Vlb => vlb,
        _ => weighted_simple.add(&vlb.scale(lambda))?,
    };
    Ok(LossOutput { loss, per_sample, simple, vlb: Some(vlb_value) })
}
