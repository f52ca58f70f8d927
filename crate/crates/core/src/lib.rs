// `!(a <= b)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod config;
pub mod diffusion;
pub mod error;
pub mod imaging;
pub mod ingest;
pub mod jsonio;
pub mod metrics;
pub mod pipeline;
pub mod plot;
pub mod signal;
pub mod wgan;

pub use error::{Error, Result};
