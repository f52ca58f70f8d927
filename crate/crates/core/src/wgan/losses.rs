//! Wasserstein losses with a gradient penalty on interpolated inputs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::models::Critic;
use crate::autodiff::{grad, Tensor};
use crate::error::{Error, Result};

pub const DEFAULT_LAMBDA_GP: f64 = 10.0;

/// Added under the square root so the norm stays differentiable at zero.
const NORM_EPS: f64 = 1e-12;

/// Anything mapping a batch `[B, ...]` to one score per element.
pub trait Scorer {
    fn score(&self, x: &Tensor) -> Result<Tensor>;
}

impl Scorer for Critic {
    fn score(&self, x: &Tensor) -> Result<Tensor> {
        self.forward(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpConfig {
    pub lambda_gp: f64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig { lambda_gp: DEFAULT_LAMBDA_GP }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_gp >= 0.0 && self.lambda_gp.is_finite()) {
            return Err(Error::Config(format!("lambda_gp must be finite and >= 0, got {}", self.lambda_gp)));
        }
        Ok(())
    }
}

pub struct CriticLoss {
    /// Differentiable total loss.
    pub loss: Tensor,
    /// `mean D(real) - mean D(fake)`.
    pub w_estimate: f64,
    /// Unweighted `mean (|grad| - 1)^2`.
    pub penalty: f64,
}

fn batch_of(t: &Tensor) -> Result<usize> {
    t.shape()
        .first()
        .copied()
        .filter(|&b| b > 0)
        .ok_or_else(|| Error::shape("critic_loss", format!("empty batch {:?}", t.shape())))
}

/// Mean of `(|∇_x D(x)|_2 - 1)^2` over the batch, kept in the graph so it can
/// be differentiated with respect to the critic's parameters.
pub fn gradient_penalty(critic: &dyn Scorer, x: &Tensor) -> Result<Tensor> {
    let b = batch_of(x)?;
    let x = x.detach().requiring_grad();
    let scores = critic.score(&x)?;
    let g = grad(&scores.sum(), &[&x], true)?.remove(0);
    let per = x.numel() / b;
    let norm = g
        .reshape(&[b, per])?
        .square()
        .sum_to(&[b, 1])?
        .add_scalar(NORM_EPS)
        .sqrt();
    Ok(norm.add_scalar(-1.0).square().mean())
}

/// `mean D(fake) - mean D(real) + λ·GP(x̂)` with `x̂ = η·real + (1-η)·fake`
/// and `η ~ U(0, 1)` drawn once per sample.
pub fn critic_loss<R: Rng + ?Sized>(
    critic: &dyn Scorer,
    real: &Tensor,
    fake: &Tensor,
    cfg: &GpConfig,
    rng: &mut R,
) -> Result<CriticLoss> {
    cfg.validate()?;
    if real.shape() != fake.shape() {
        return Err(Error::shape(
            "critic_loss",
            format!("real {:?} vs fake {:?}", real.shape(), fake.shape()),
        ));
    }
    let b = batch_of(real)?;
    let eta: Vec<f64> = (0..b).map(|_| rng.random::<f64>()).collect();
    let mut eta_shape = vec![1; real.shape().len()];
    eta_shape[0] = b;
    let eta = Tensor::new(eta, &eta_shape)?;
    let (real, fake) = (real.detach(), fake.detach());
    let mixed = real.mul(&eta)?.add(&fake.mul(&eta.neg().add_scalar(1.0))?)?;

    let d_real = critic.score(&real)?.mean();
    let d_fake = critic.score(&fake)?.mean();
    let penalty = gradient_penalty(critic, &mixed).map_err(|e| match e {
        Error::DoubleBackward(op) => Error::Config(format!(
            "critic uses `{op}`, which has no second-order gradient"
        )),
        other => other,
    })?;
    let w_estimate = d_real.item() - d_fake.item();
    let penalty_value = penalty.item();
    let loss = d_fake.sub(&d_real)?.add(&penalty.scale(cfg.lambda_gp))?;
    Ok(CriticLoss { loss, w_estimate, penalty: penalty_value })
}

/// `-mean D(fake)`.
pub fn generator_loss(critic: &dyn Scorer, fake: &Tensor) -> Result<Tensor> {
    Ok(critic.score(fake)?.mean().neg())
}
