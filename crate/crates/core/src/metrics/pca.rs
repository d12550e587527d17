//! Two-component PCA of latent codes, for scatter exports.

use crate::error::{Error, Result};
use crate::linalg::{mean_covariance, symmetric_eigen};

/// Project `n × k` row-major latents onto their top-2 principal components,
/// variance-ordered. For `k < 2` the second coordinate is zero. Returns the
/// coordinates and the full eigenvalue spectrum.
pub fn pca_project(latents: &[f64], n: usize, k: usize) -> Result<(Vec<[f64; 2]>, Vec<f64>)> {
    if n < 2 {
        return Err(Error::Contract(
            "pca_project needs at least 2 points".into(),
        ));
    }
    if latents.len() != n * k {
        return Err(Error::Shape(format!(
            "pca_project: expected {n}×{k}, got {} values",
            latents.len()
        )));
    }
    if k < 2 {
        let coords = (0..n)
            .map(|i| [if k == 1 { latents[i] } else { 0.0 }, 0.0])
            .collect();
        return Ok((coords, vec![if k == 1 { 1.0 } else { 0.0 }]));
    }
    let (mean, cov) = mean_covariance(latents, n, k);
    let (eigvals, eigvecs) = symmetric_eigen(&cov, k)?;
    let mut coords = Vec::with_capacity(n);
    for i in 0..n {
        let mut point = [0.0; 2];
        for (c, slot) in point.iter_mut().enumerate() {
            let mut s = 0.0;
            for j in 0..k {
                s += (latents[i * k + j] - mean[j]) * eigvecs[j * k + c];
            }
            *slot = s;
        }
        coords.push(point);
    }
    Ok((coords, eigvals))
}
