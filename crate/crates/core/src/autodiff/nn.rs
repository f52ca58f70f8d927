//! Parameterized layers built from tensor ops.

use rand::Rng;

use super::tensor::{dims3, Tensor};
use crate::error::Result;

/// Anything that owns trainable tensors.
pub trait Module {
    /// Named parameters, always in the same order.
    fn parameters(&self) -> Vec<(String, Tensor)>;

    /// Non-trainable state that belongs in checkpoints (running statistics).
    fn buffers(&self) -> Vec<(String, Tensor)> {
        Vec::new()
    }

    fn parameter_tensors(&self) -> Vec<Tensor> {
        self.parameters().into_iter().map(|(_, t)| t).collect()
    }

    /// Parameters followed by buffers: everything a checkpoint stores.
    fn state(&self) -> Vec<(String, Tensor)> {
        let mut s = self.parameters();
        s.extend(self.buffers());
        s
    }
}

/// Whether normalization layers use batch statistics or running estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub(crate) fn prefixed(prefix: &str, items: Vec<(String, Tensor)>) -> Vec<(String, Tensor)> {
    items
        .into_iter()
        .map(|(n, t)| (format!("{prefix}.{n}"), t))
        .collect()
}

fn uniform_param<R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::param(data, shape).expect("shape matches data")
}

/// Affine layer: `x [B, in] -> x W + b`.
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Dense {
            weight: uniform_param(&[inputs, outputs], bound, rng),
            bias: uniform_param(&[outputs], bound, rng),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.matmul(&self.weight)?.add(&self.bias)
    }
}

impl Module for Dense {
    fn parameters(&self) -> Vec<(String, Tensor)> {
        vec![
            ("weight".into(), self.weight.clone()),
            ("bias".into(), self.bias.clone()),
        ]
    }
}

pub struct Conv1d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub pad: usize,
}

impl Conv1d {
    pub fn new<R: Rng + ?Sized>(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / ((in_ch * kernel) as f64).sqrt();
        Conv1d {
            weight: uniform_param(&[out_ch, in_ch, kernel], bound, rng),
            bias: uniform_param(&[out_ch], bound, rng),
            stride,
            pad,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let co = self.weight.shape()[0];
        x.conv1d(&self.weight, self.stride, self.pad)?
            .add(&self.bias.reshape(&[1, co, 1])?)
    }
}

impl Module for Conv1d {
    fn parameters(&self) -> Vec<(String, Tensor)> {
        vec![
            ("weight".into(), self.weight.clone()),
            ("bias".into(), self.bias.clone()),
        ]
    }
}

pub struct ConvTranspose1d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub pad: usize,
}

impl ConvTranspose1d {
    pub fn new<R: Rng + ?Sized>(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / ((out_ch * kernel) as f64).sqrt();
        ConvTranspose1d {
            weight: uniform_param(&[in_ch, out_ch, kernel], bound, rng),
            bias: uniform_param(&[out_ch], bound, rng),
            stride,
            pad,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let co = self.weight.shape()[1];
        x.conv_transpose1d(&self.weight, self.stride, self.pad)?
            .add(&self.bias.reshape(&[1, co, 1])?)
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        let k = self.weight.shape()[2];
        (input_len - 1) * self.stride + k - 2 * self.pad
    }
}

impl Module for ConvTranspose1d {
    fn parameters(&self) -> Vec<(String, Tensor)> {
        vec![
            ("weight".into(), self.weight.clone()),
            ("bias".into(), self.bias.clone()),
        ]
    }
}

pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    pub fn new<R: Rng + ?Sized>(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / ((in_ch * kernel * kernel) as f64).sqrt();
        Conv2d {
            weight: uniform_param(&[out_ch, in_ch, kernel, kernel], bound, rng),
            bias: uniform_param(&[out_ch], bound, rng),
            stride,
            pad,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let co = self.weight.shape()[0];
        x.conv2d(&self.weight, self.stride, self.pad)?
            .add(&self.bias.reshape(&[1, co, 1, 1])?)
    }
}

impl Module for Conv2d {
    fn parameters(&self) -> Vec<(String, Tensor)> {
        vec![
            ("weight".into(), self.weight.clone()),
            ("bias".into(), self.bias.clone()),
        ]
    }
}

/// Per-channel batch normalization over `[B, C, L]` inputs.
pub struct BatchNorm1d {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm1d {
    pub fn new(channels: usize) -> Self {
        BatchNorm1d {
            gamma: Tensor::ones(&[channels]).requiring_grad(),
            beta: Tensor::zeros(&[channels]).requiring_grad(),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::ones(&[channels]),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    /// In [`Mode::Train`] normalizes with batch statistics and updates the
    /// running estimates; in [`Mode::Eval`] uses the running estimates.
    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let (b, c, l) = dims3("batch_norm", x)?;
        let stat_shape = [1, c, 1];
        let xhat = match mode {
            Mode::Train => {
                let mean = x.mean_to(&stat_shape)?;
                let centered = x.sub(&mean)?;
                let var = centered.square().mean_to(&stat_shape)?;
                let n = (b * l) as f64;
                let unbiased = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
                let m = self.momentum;
                let rm: Vec<f64> = self
                    .running_mean
                    .data()
                    .iter()
                    .zip(mean.data().iter())
                    .map(|(r, v)| (1.0 - m) * r + m * v)
                    .collect();
                let rv: Vec<f64> = self
                    .running_var
                    .data()
                    .iter()
                    .zip(var.data().iter())
                    .map(|(r, v)| (1.0 - m) * r + m * v * unbiased)
                    .collect();
                self.running_mean.set_data(rm)?;
                self.running_var.set_data(rv)?;
                centered.div(&var.add_scalar(self.eps).sqrt())?
            }
            Mode::Eval => {
                let mean = self.running_mean.reshape(&stat_shape)?;
                let std = self.running_var.add_scalar(self.eps).sqrt().reshape(&stat_shape)?;
                x.sub(&mean)?.div(&std)?
            }
        };
        xhat.mul(&self.gamma.reshape(&stat_shape)?)?
            .add(&self.beta.reshape(&stat_shape)?)
    }
}

impl Module for BatchNorm1d {
    fn parameters(&self) -> Vec<(String, Tensor)> {
        vec![
            ("gamma".into(), self.gamma.clone()),
            ("beta".into(), self.beta.clone()),
        ]
    }

    fn buffers(&self) -> Vec<(String, Tensor)> {
        vec![
            ("running_mean".into(), self.running_mean.clone()),
            ("running_var".into(), self.running_var.clone()),
        ]
    }
}

/// Normalizes each `(batch, channel)` row of a `[B, C, L]` tensor over `L`,
/// without affine parameters.
pub fn instance_norm(x: &Tensor, eps: f64) -> Result<Tensor> {
    let (b, c, _) = dims3("instance_norm", x)?;
    let stat_shape = [b, c, 1];
    let centered = x.sub(&x.mean_to(&stat_shape)?)?;
    let var = centered.square().mean_to(&stat_shape)?;
    centered.div(&var.add_scalar(eps).sqrt())
}
