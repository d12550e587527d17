//! Latent-space statistics of the training data: mean, covariance, and the
//! Cholesky factor used for Mahalanobis distances.

use crate::checkpoint::Container;
use crate::data::EncodedDataset;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, mean_covariance};
use crate::numerics::Tensor;
use crate::vae::VaeModel;
use serde::{Deserialize, Serialize};

/// Mean and covariance of the training latents (encoder means), plus the
/// Cholesky factor of the ridge-regularised covariance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatentStats {
    pub k: usize,
    pub mean: Vec<f64>,
    /// Row-major `k×k` covariance, before regularisation.
    pub sigma: Vec<f64>,
    /// Diagonal ridge added to make the factorisation succeed.
    pub ridge: f64,
    /// Lower-triangular Cholesky factor of `sigma + ridge·I`.
    pub chol: Vec<f64>,
}

impl LatentStats {
    /// Statistics from raw latent rows (`n × k` row-major).
    pub fn from_latents(latents: &[f64], n: usize, k: usize) -> Result<Self> {
        if n == 0 || latents.len() != n * k {
            return Err(Error::Stats(format!(
                "expected {n}×{k} latent matrix, got {} values",
                latents.len()
            )));
        }
        let (mean, sigma) = mean_covariance(latents, n, k);
        let trace: f64 = (0..k).map(|i| sigma[i * k + i]).sum();
        // The ridge scales with the covariance but keeps a positive floor so
        // degenerate (zero-variance) latents still factorise.
        let ridge = (1e-6 * trace / k as f64).max(1e-12);
        let mut regularised = sigma.clone();
        for i in 0..k {
            regularised[i * k + i] += ridge;
        }
        let chol = cholesky(&regularised, k)
            .map_err(|e| Error::Stats(format!("latent covariance is not usable: {e}")))?;
        Ok(Self {
            k,
            mean,
            sigma,
            ridge,
            chol,
        })
    }

    /// Residual `max |LLᵀ − (Σ + ridge·I)|`, for factorisation checks.
    pub fn factorisation_residual(&self) -> f64 {
        let k = self.k;
        let mut worst: f64 = 0.0;
        for i in 0..k {
            for j in 0..k {
                let mut s = 0.0;
                for p in 0..k {
                    s += self.chol[i * k + p] * self.chol[j * k + p];
                }
                let mut want = self.sigma[i * k + j];
                if i == j {
                    want += self.ridge;
                }
                worst = worst.max((s - want).abs());
            }
        }
        worst
    }

    pub(crate) fn as_tensors(&self) -> Result<Vec<(String, Tensor)>> {
        Ok(vec![
            (
                "latent_stats.mean".into(),
                Tensor::new(vec![self.k], self.mean.clone())?,
            ),
            (
                "latent_stats.sigma".into(),
                Tensor::new(vec![self.k, self.k], self.sigma.clone())?,
            ),
            (
                "latent_stats.chol".into(),
                Tensor::new(vec![self.k, self.k], self.chol.clone())?,
            ),
            (
                "latent_stats.ridge".into(),
                Tensor::new(vec![1], vec![self.ridge])?,
            ),
        ])
    }

    /// Read back from a checkpoint container, if present.
    pub(crate) fn from_container(container: &Container) -> Result<Option<Self>> {
        if container.tensor("latent_stats.mean").is_err() {
            return Ok(None);
        }
        let mean = container.tensor("latent_stats.mean")?.data().to_vec();
        let k = mean.len();
        Ok(Some(Self {
            k,
            mean,
            sigma: container.tensor("latent_stats.sigma")?.data().to_vec(),
            chol: container.tensor("latent_stats.chol")?.data().to_vec(),
            ridge: container.tensor("latent_stats.ridge")?.data()[0],
        }))
    }
}

/// Collect the encoder means of every training row and fit latent statistics.
/// Means — not sampled latents — are what the attack loop perturbs.
pub fn fit_latent_stats(vae: &VaeModel, train: &EncodedDataset) -> Result<LatentStats> {
    let mu = vae.encode_mu(&train.num, &train.cat)?;
    LatentStats::from_latents(mu.data(), train.len(), vae.latent_dim())
}
