//! Central-difference gradient checking.

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates skipped because they sit on a kink.
    pub skipped: usize,
}

/// Compares the gradient of `loss` with respect to every element of `params`
/// against `(f(θ+ε) - f(θ-ε)) / 2ε`.
///
/// A coordinate is treated as a kink (and skipped) when its forward and
/// backward one-sided differences disagree by more than `1e-3` relative,
/// which only happens when a nondifferentiable point such as ReLU at 0 lies
/// within `ε`.
pub fn grad_check(
    params: &[Tensor],
    loss: impl Fn() -> Result<Tensor>,
    eps: f64,
) -> Result<GradCheck> {
    for p in params {
        if p.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("grad_check: non-finite parameter"));
        }
        p.zero_grad();
    }
    let l = loss()?;
    l.backward()?;
    let f0 = l.item();
    let mut report = GradCheck { max_rel_error: 0.0, checked: 0, skipped: 0 };
    for p in params {
        let analytic = p.grad().unwrap_or_else(|| vec![0.0; p.numel()]);
        let base = p.to_vec();
        for i in 0..base.len() {
            let mut probe = base.clone();
            probe[i] = base[i] + eps;
            p.set_data(probe.clone())?;
            let fp = loss()?.item();
            probe[i] = base[i] - eps;
            p.set_data(probe)?;
            let fm = loss()?.item();
            p.set_data(base.clone())?;

            let fwd = (fp - f0) / eps;
            let bwd = (f0 - fm) / eps;
            if (fwd - bwd).abs() > 1e-3 * fwd.abs().max(bwd.abs()).max(1.0) {
                report.skipped += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * eps);
            let a = analytic[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.max_rel_error = report.max_rel_error.max(rel);
            report.checked += 1;
        }
        p.zero_grad();
    }
    Ok(report)
}
