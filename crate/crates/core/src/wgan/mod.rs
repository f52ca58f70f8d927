//! Wasserstein GAN with gradient penalty over 1-D beats.

pub mod losses;
pub mod models;
pub mod train;

pub use losses::{critic_loss, generator_loss, gradient_penalty, CriticLoss, GpConfig, Scorer};
pub use models::{Critic, CriticConfig, Generator, GeneratorConfig};
pub use train::{generate, train_wgan_gp, WganModel, WganTraceRow, WganTrainConfig};
