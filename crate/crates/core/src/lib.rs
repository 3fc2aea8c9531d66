//! Diffusion-based instance noise for GAN training.
//!
//! * [`schedule`]: linear variance schedule and forward diffusion.
//! * [`tsampler`]: adaptive maximum timestep and exploration list.
//! * [`net`]: dense networks, reverse-mode gradients, Adam.
//! * [`trainer`]: the alternating training loop on diffused samples.
//! * [`analytic`]: closed-form toy divergences and optimal discriminators.
//! * [`data`]: 25-Gaussians data, coverage scoring and CSV I/O.
//! * [`experiment`]: seeded end-to-end runs with their datasets.
//! * [`gradcheck`]: finite-difference verification of the gradients.

pub mod analytic;
pub mod data;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod net;
pub mod quadrature;
pub mod schedule;
pub mod trainer;
pub mod tsampler;

pub use analytic::{jsd_diffused, jsd_original, optimal_discriminator, wasserstein_reference, JsdEstimate, JsdMethod};
pub use data::{coverage, CoverageReport, GaussGrid};
pub use error::{Error, Result};
pub use net::{AdamConfig, AdamState, DenseNet};
pub use schedule::{DiffusionSchedule, ScheduleParams};
pub use trainer::{train, GanConfig, LossVariant, TrainTrace};
pub use tsampler::{pi_weights, PolicyParams, SamplingMode, TimestepPolicy};
