//! Reconstruction-quality metrics: accuracy delta, MSE, R², cosine, Pearson,
//! and per-column categorical accuracy.

use crate::data::EncodedDataset;
use crate::error::Result;
use crate::models::{evaluate, TargetModel};
use crate::vae::VaeModel;
use serde::{Deserialize, Serialize};

/// Reconstruction report over a held-out split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconReport {
    /// Accuracy(model on x) − Accuracy(model on x̃).
    pub delta_acc: f64,
    pub mse: f64,
    pub r2: f64,
    pub cosine: f64,
    pub pearson: f64,
    /// Mean per-column exact-match rate; absent for all-numeric data.
    pub cat_acc: Option<f64>,
}

/// Flattened-vector statistics between original and reconstructed z-scored
/// numeric features.
pub fn numeric_stats(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mse = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
    let mean_x = x.iter().sum::<f64>() / n;
    let ss_tot: f64 = x.iter().map(|a| (a - mean_x) * (a - mean_x)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        0.0
    };
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny = y.iter().map(|a| a * a).sum::<f64>().sqrt();
    let cosine = if nx > 0.0 && ny > 0.0 {
        dot / (nx * ny)
    } else {
        0.0
    };
    let mean_y = y.iter().sum::<f64>() / n;
    let cov: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - mean_x) * (b - mean_y))
        .sum();
    let sx: f64 = x
        .iter()
        .map(|a| (a - mean_x) * (a - mean_x))
        .sum::<f64>()
        .sqrt();
    let sy: f64 = y
        .iter()
        .map(|b| (b - mean_y) * (b - mean_y))
        .sum::<f64>()
        .sqrt();
    let pearson = if sx > 0.0 && sy > 0.0 {
        cov / (sx * sy)
    } else {
        0.0
    };
    (mse, r2, cosine, pearson)
}

/// Measure how well the VAE reconstruction preserves a split, through the
/// eyes of a trained target model and the numeric/categorical metric suite.
pub fn recon_report(
    model: &TargetModel,
    vae: &VaeModel,
    split: &EncodedDataset,
) -> Result<ReconReport> {
    let (rec_num, rec_cat) = vae.reconstruct_encoded(split)?;
    let reconstructed = EncodedDataset {
        num: rec_num.clone(),
        cat: rec_cat.clone(),
        y: split.y.clone(),
        split: split.split,
    };
    let acc_original = evaluate(model, split)?.accuracy;
    let acc_recon = evaluate(model, &reconstructed)?.accuracy;
    let (mse, r2, cosine, pearson) = if split.num_dim() > 0 {
        numeric_stats(split.num.data(), rec_num.data())
    } else {
        (0.0, 0.0, 0.0, 0.0)
    };
    let cat_acc = if split.cat_dim() > 0 {
        let m = split.cat_dim();
        let mut per_col_hits = vec![0usize; m];
        for (orig, rec) in split.cat.iter().zip(&rec_cat) {
            for j in 0..m {
                if orig[j] == rec[j] {
                    per_col_hits[j] += 1;
                }
            }
        }
        let n = split.len() as f64;
        Some(per_col_hits.iter().map(|&h| h as f64 / n).sum::<f64>() / m as f64)
    } else {
        None
    };
    Ok(ReconReport {
        delta_acc: acc_original - acc_recon,
        mse,
        r2,
        cosine,
        pearson,
        cat_acc,
    })
}
