//! Evaluation metrics: reconstruction quality, attack effectiveness,
//! imperceptibility (Mahalanobis outlier rate, IDSR), and sparsity.

mod campaign;
mod chi2;
mod pca;
mod recon;

pub use campaign::{
    campaign_report, mahalanobis, sparsity_metrics, AsrRule, CampaignReport, MdRule,
    SparsityMetrics,
};
pub use chi2::{chi2_cdf, chi2_quantile, gamma_p, ln_gamma};
pub use pca::pca_project;
pub use recon::{numeric_stats, recon_report, ReconReport};

#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        /// IDSR = ASR × (1 − O_r) recomputed from arbitrary rates.
        #[test]
        fn idsr_identity(asr in 0.0f64..=1.0, or in 0.0f64..=1.0) {
            let report = CampaignReport {
                n: 100,
                asr,
                outlier_rate: or,
                md_rule: MdRule::Paper,
                asr_rule: AsrRule::VsTrueLabel,
                chi2_threshold: 1.0,
                mean_l2_delta: None,
                mean_l0: 0.0,
                sparsity_rate: 0.0,
                mean_l1_encoded: 0.0,
                mahalanobis_distances: vec![],
            };
            prop_assert_eq!(report.idsr(), asr * (1.0 - or));
            prop_assert!(report.idsr() >= 0.0 && report.idsr() <= 1.0);
        }
    }

    #[test]
    fn md_invariant_under_latent_basis_change() {
        // Applying the same invertible linear map to the stats-fitting sample
        // and the query point leaves MD unchanged.
        use crate::vae::LatentStats;
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(77);
        let (n, k) = (400, 3);
        let data: Vec<f64> = (0..n * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let query = [0.4, -0.9, 1.3];

        let stats = LatentStats::from_latents(&data, n, k).unwrap();
        let base_md = mahalanobis(&query, &stats);

        for trial in 0..5 {
            // Random well-conditioned map: identity plus a small random part.
            let mut map = vec![0.0; k * k];
            for i in 0..k {
                for j in 0..k {
                    map[i * k + j] = if i == j { 1.0 } else { 0.0 } + rng.random_range(-0.3..0.3);
                }
            }
            let apply = |v: &[f64]| -> Vec<f64> {
                (0..k)
                    .map(|i| (0..k).map(|j| map[i * k + j] * v[j]).sum())
                    .collect()
            };
            let mapped: Vec<f64> = data.chunks(k).flat_map(&apply).collect();
            let mapped_stats = LatentStats::from_latents(&mapped, n, k).unwrap();
            let mapped_md = mahalanobis(&apply(&query), &mapped_stats);
            assert!(
                (mapped_md - base_md).abs() < 1e-6,
                "trial {trial}: {mapped_md} vs {base_md}"
            );
        }
    }
}
