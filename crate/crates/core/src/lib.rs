//! Spatial Broadcast decoder VAEs and the tooling to study them: procedural sprite
//! datasets with known generative factors, VAE and FactorVAE objectives, disentanglement
//! metrics, latent-space visualizations and a config-driven experiment runner.

pub mod analysis;
pub mod dataset;
pub mod error;
pub mod images;
pub mod metrics;
pub mod nn;
pub mod objectives;
pub mod rng;
pub mod runner;

pub use error::{Error, Result};
