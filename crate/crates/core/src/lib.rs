//! Laboratory for GAN training dynamics on synthetic data whose true
//! distribution is known in closed form.
//!
//! The crate contains a small reverse-mode autodiff engine with support for
//! gradients of gradients, the linear generator and ReLU discriminator models,
//! the six training objectives, the synthetic tasks and Fréchet evaluator, the
//! alternating trainer, a seed-replicated sweep harness, the loss-landscape
//! analysis of two separated Gaussians, and plain SVG plotting.

pub mod analysis;
pub mod autodiff;
pub mod losses;
pub mod models;
pub mod plot;
pub mod rng;
pub mod stats;
pub mod sweep;
pub mod synth;
pub mod trainer;

pub use autodiff::{NodeId, Tape, Tensor};
pub use losses::{GanVariant, PenaltyConfig};
pub use models::{DiscriminatorParams, GaussianMoments, GeneratorParams};
pub use synth::TaskSpec;
pub use trainer::{train_run, TrainConfig, TrainingTrace};
