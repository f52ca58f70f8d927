//! Reverse-mode automatic differentiation over `f64` tensors.

mod backward;
mod kernels;
mod tensor;

pub mod checkpoint;
pub mod gradcheck;
pub mod nn;
pub mod optim;

pub use backward::{grad, input_gradient};
pub use gradcheck::{grad_check, GradCheck};
pub use nn::{Mode, Module};
pub use optim::{Adam, AdamConfig};
pub use tensor::{concat, Tensor};

#[cfg(test)]
mod tests;
