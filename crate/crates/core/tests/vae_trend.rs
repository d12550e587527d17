//! Seed-averaged ablation trend: the classification term improves latent
//! separability. Compared over five seeds, not per seed.

mod moons;

use tabattack::data::{fit_transform, stratified_split, SplitTag};
use tabattack::vae::{train_vae, VaeConfig, VaeModel};

#[test]
fn classification_loss_improves_latent_accuracy_on_average() {
    let mut with_cls = Vec::new();
    let mut without_cls = Vec::new();
    for seed in 0..5u64 {
        let ds = moons::moon_dataset(600 + seed, 400);
        let manifest = stratified_split(&ds, (0.70, 0.10, 0.20), seed).unwrap();
        let (prep, train) = fit_transform(&ds.subset(&manifest.train)).unwrap();
        let val = prep
            .transform(&ds.subset(&manifest.val), SplitTag::Val)
            .unwrap();
        for (cls_weight, bucket) in [(1.0, &mut with_cls), (0.0, &mut without_cls)] {
            let mut vae = VaeModel::new(
                prep.num_dim(),
                prep.cardinalities(),
                prep.class_count(),
                VaeConfig {
                    encode_widths: vec![16],
                    latent_dim: 4,
                    epochs: 30,
                    kl_weight: 1e-3,
                    cls_weight,
                    lr: 1e-2,
                    batch: 64,
                    seed: 700 + seed,
                },
            )
            .unwrap();
            train_vae(&mut vae, &train, None, None).unwrap();
            bucket.push(tabattack::vae::latent_classifier_accuracy(&vae, &val).unwrap());
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (on, off) = (mean(&with_cls), mean(&without_cls));
    assert!(
        on >= off,
        "latent accuracy with classification loss {on:.3} fell below the ablation {off:.3} \
         (per-seed: {with_cls:.3?} vs {without_cls:.3?})"
    );
}
