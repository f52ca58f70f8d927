//! Closed-form Gaussian pieces of the forward and reverse processes.

use std::f64::consts::PI;

use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};

fn same_len(op: &'static str, a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::shape(op, format!("lengths {} and {}", a.len(), b.len())));
    }
    Ok(())
}

/// `x_t = √ᾱ_t·x0 + √(1-ᾱ_t)·ε`
pub fn q_sample(s: &NoiseSchedule, x0: &[f64], t: usize, eps: &[f64]) -> Result<Vec<f64>> {
    s.check_step(t)?;
    same_len("q_sample", x0, eps)?;
    let (a, b) = (s.alpha_bar(t).sqrt(), (1.0 - s.alpha_bar(t)).sqrt());
    Ok(x0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect())
}

/// Coefficients of `x0` and `x_t` in the posterior mean.
pub fn posterior_coefs(s: &NoiseSchedule, t: usize) -> (f64, f64) {
    let ab = s.alpha_bar(t);
    let ab_prev = s.alpha_bar(t - 1);
    let c0 = ab_prev.sqrt() * s.beta(t) / (1.0 - ab);
    let ct = s.alpha(t).sqrt() * (1.0 - ab_prev) / (1.0 - ab);
    (c0, ct)
}

/// Mean and variance of `q(x_{t-1} | x_t, x0)`.
pub fn posterior_params(
    s: &NoiseSchedule,
    x0: &[f64],
    x_t: &[f64],
    t: usize,
) -> Result<(Vec<f64>, f64)> {
    if t == 0 {
        return Err(Error::Undefined("posterior at t = 0".into()));
    }
    s.check_step(t)?;
    same_len("posterior_params", x0, x_t)?;
    let (c0, ct) = posterior_coefs(s, t);
    let mu = x0.iter().zip(x_t).map(|(a, b)| c0 * a + ct * b).collect();
    Ok((mu, s.beta_tilde(t)))
}

/// `μ_θ = (x_t - (1-α_t)/√(1-ᾱ_t)·ε̂) / √α_t`
pub fn mu_from_eps(s: &NoiseSchedule, x_t: &[f64], t: usize, eps_hat: &[f64]) -> Result<Vec<f64>> {
    s.check_step(t)?;
    same_len("mu_from_eps", x_t, eps_hat)?;
    let (ra, ec) = mu_coefs(s, t);
    Ok(x_t.iter().zip(eps_hat).map(|(x, e)| ra * (x - ec * e)).collect())
}

/// `(1/√α_t, (1-α_t)/√(1-ᾱ_t))`
pub fn mu_coefs(s: &NoiseSchedule, t: usize) -> (f64, f64) {
    (1.0 / s.alpha(t).sqrt(), s.beta(t) / (1.0 - s.alpha_bar(t)).sqrt())
}

/// Log-variance interpolation `v·log β_t + (1-v)·log β̃_t`, exponentiated.
pub fn sigma_from_v(s: &NoiseSchedule, v: &[f64], t: usize) -> Result<Vec<f64>> {
    s.check_step(t)?;
    let hi = s.beta(t).ln();
    let lo = s.log_beta_tilde_clipped(t);
    let lo_var = if t == 1 { s.beta(1) } else { s.beta_tilde(t) };
    Ok(v.iter()
        .map(|&v| {
            if v == 1.0 {
                s.beta(t)
            } else if v == 0.0 {
                lo_var
            } else {
                (v * hi + (1.0 - v) * lo).exp()
            }
        })
        .collect())
}

/// `KL(N(μ1, σ1²) ‖ N(μ2, σ2²))` in nats.
pub fn gaussian_kl(mu1: f64, var1: f64, mu2: f64, var2: f64) -> Result<f64> {
    if !(var1 > 0.0 && var2 > 0.0) {
        return Err(Error::Domain(format!("variances must be positive, got {var1} and {var2}")));
    }
    Ok(0.5 * ((var2 / var1).ln() + (var1 + (mu1 - mu2).powi(2)) / var2 - 1.0))
}

/// `-log N(x; μ, σ²)`
pub fn gaussian_nll(x: f64, mu: f64, var: f64) -> f64 {
    0.5 * ((2.0 * PI * var).ln() + (x - mu).powi(2) / var)
}
