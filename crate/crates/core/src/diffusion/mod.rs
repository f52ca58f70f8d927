//! Denoising diffusion over embedded beat images.

pub mod gaussian;
pub mod losses;
pub mod model;
pub mod sampler;
pub mod schedule;
pub mod train;

pub use losses::{compute_losses, Objective, DEFAULT_LAMBDA_HYBRID};
pub use model::{Denoiser, DenoiserConfig, EpsModel, ModelOutput};
pub use sampler::{ImportanceSampler, SamplerKind, TimestepSampler};
pub use schedule::{cosine_schedule, linear_schedule, NoiseSchedule, ScheduleKind};
pub use train::{ancestral_sample, ancestral_sample_clipped, train_ddpm, CaseConfig, DdpmModel, DdpmTrainConfig, DdpmTraceRow};

#[cfg(test)]
mod tests;
