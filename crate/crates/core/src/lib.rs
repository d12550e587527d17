//! On-manifold adversarial example generation for tabular data.
//!
//! The library trains a mixed-input variational autoencoder on tabular data,
//! trains target classifiers (MLP, soft decision tree), and generates
//! adversarial examples by optimising perturbations in the VAE latent space.
//! Effectiveness and imperceptibility are measured with attack success rate,
//! Mahalanobis-distance outlier rates against a chi-squared threshold, and
//! the in-distribution success rate that combines the two.

pub mod attacks;
pub mod checkpoint;
pub mod data;
pub mod driver;
pub mod error;
pub mod linalg;
pub mod logging;
pub mod metrics;
pub mod models;
pub mod numerics;
pub mod vae;

pub use error::{Error, Result};
