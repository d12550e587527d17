//! Synthetic-manifold and dominance oracles for the attack algorithms.

mod moons;

use moons::standard_fixture;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use tabattack::attacks::{attack_sample, AttackConfig, AttackKind, EncodedRow};
use tabattack::data::{
    fit_transform, stratified_split, Dataset, RawValue, SplitTag, TabularSchema,
};
use tabattack::metrics::{chi2_quantile, mahalanobis};
use tabattack::models::{
    evaluate, train_target, InputSpec, MlpConfig, MlpModel, TargetModel, TrainConfig,
};
use tabattack::numerics::{Tape, Tensor};
use tabattack::vae::{fit_latent_stats, train_vae, VaeConfig, VaeModel};

/// Two-moon data with a linear target: the latent C&W attack flips at least
/// 80% of correctly classified test points while the median Mahalanobis
/// distance stays below the chi-squared threshold.
#[test]
fn latent_cw_two_moon_linear_target() {
    let ds = moons::moon_dataset(301, 1200);
    let manifest = stratified_split(&ds, (0.70, 0.10, 0.20), 301).unwrap();
    let (prep, train) = fit_transform(&ds.subset(&manifest.train)).unwrap();
    let val = prep
        .transform(&ds.subset(&manifest.val), SplitTag::Val)
        .unwrap();
    let test = prep
        .transform(&ds.subset(&manifest.test), SplitTag::Test)
        .unwrap();

    let spec = InputSpec {
        num_dim: 2,
        cat_cardinalities: prep.cardinalities(),
        one_hot: true,
        class_count: 2,
    };
    let mut rng = ChaCha12Rng::seed_from_u64(302);
    let mut model = TargetModel::Mlp(MlpModel::new(spec, &MlpConfig { hidden: vec![] }, &mut rng));
    let tc = TrainConfig {
        epochs: 40,
        lr: 1e-2,
        batch: 64,
        seed: 303,
        patience: 40,
    };
    train_target(&mut model, &train, &val, &tc).unwrap();
    assert!(evaluate(&model, &test).unwrap().accuracy > 0.9);

    let mut vae = VaeModel::new(
        2,
        prep.cardinalities(),
        2,
        VaeConfig {
            encode_widths: vec![32, 16],
            latent_dim: 2,
            epochs: 50,
            kl_weight: 1e-3,
            cls_weight: 1.0,
            lr: 1e-2,
            batch: 128,
            seed: 304,
        },
    )
    .unwrap();
    train_vae(&mut vae, &train, None, None).unwrap();
    let stats = fit_latent_stats(&vae, &train).unwrap();

    let mut cfg = AttackConfig::new(AttackKind::LatentCw);
    cfg.lambda = 20.0;
    let mut correct = 0;
    let mut flipped = 0;
    let mut mds = Vec::new();
    for i in 0..test.len().min(150) {
        let row = EncodedRow {
            num: test.num.row(i),
            cat: test.cat[i].clone(),
        };
        if model.predict_row(&row.num, &row.cat).unwrap() != test.y[i] {
            continue;
        }
        correct += 1;
        let out = attack_sample(Some(&vae), &model, &prep, i, &row, test.y[i], &cfg).unwrap();
        if out.success {
            flipped += 1;
        }
        mds.push(mahalanobis(out.latent_adv.as_ref().unwrap(), &stats));
    }
    assert!(
        correct >= 100,
        "fixture degenerated: only {correct} correct"
    );
    let flip_rate = flipped as f64 / correct as f64;
    assert!(flip_rate >= 0.8, "flip rate {flip_rate:.3} below 0.8");
    mds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = mds[mds.len() / 2];
    let threshold = chi2_quantile(0.95, 2).unwrap();
    assert!(
        median < threshold,
        "median MD {median:.3} at or above threshold {threshold:.3}"
    );
}

/// Latent PGD lands within ten ASR points of the C&W attack when its L∞
/// budget covers the displacement scale the C&W attack settles at.
#[test]
fn pgd_vae_tracks_latent_cw() {
    let f = standard_fixture();
    let samples: Vec<usize> = (0..200).collect();
    let asr = |cfg: &AttackConfig| {
        let hits = samples
            .iter()
            .filter(|&&i| {
                let row = EncodedRow {
                    num: f.test.num.row(i),
                    cat: f.test.cat[i].clone(),
                };
                let o = attack_sample(Some(&f.vae), &f.model, &f.prep, i, &row, f.test.y[i], cfg)
                    .unwrap();
                o.pred_adversarial != f.test.y[i]
            })
            .count();
        hits as f64 / samples.len() as f64
    };
    let mut cw = AttackConfig::new(AttackKind::LatentCw);
    cw.lambda = 20.0;
    let cw_asr = asr(&cw);
    let mut pv = AttackConfig::new(AttackKind::PgdVae);
    pv.epsilon = 8.0;
    pv.iterations = 10;
    let pv_asr = asr(&pv);
    assert!(
        (cw_asr - pv_asr).abs() <= 0.10,
        "ASR gap {:.3} (cw {cw_asr:.3}, pgd_vae {pv_asr:.3})",
        (cw_asr - pv_asr).abs()
    );
}

/// Iterative dominance on a quadratic decision boundary: across 1000 random
/// starting points, PGD with ten steps reaches a cross-entropy at least as
/// high as single-step FGSM in at least 95% of cases.
#[test]
fn pgd_dominates_fgsm_on_quadratic_boundary() {
    // Annulus data: class = whether the radius exceeds 1.
    let schema = TabularSchema::from_json(
        r#"{
            "columns": [
                {"name": "px", "kind": "numeric"},
                {"name": "py", "kind": "numeric"}
            ],
            "target": {"name": "y", "classes": ["inner", "outer"]}
        }"#,
    )
    .unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(400);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..600 {
        let r: f64 = rng.random_range(0.3..1.7);
        let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        rows.push(vec![
            RawValue::Num(r * theta.cos()),
            RawValue::Num(r * theta.sin()),
        ]);
        labels.push(usize::from(r > 1.0));
    }
    let ds = Dataset {
        schema,
        rows,
        labels,
    };
    let (prep, train) = fit_transform(&ds).unwrap();
    let spec = InputSpec {
        num_dim: 2,
        cat_cardinalities: vec![],
        one_hot: true,
        class_count: 2,
    };
    let mut model = TargetModel::Mlp(MlpModel::new(
        spec,
        &MlpConfig { hidden: vec![16] },
        &mut rng,
    ));
    let tc = TrainConfig {
        epochs: 60,
        lr: 1e-2,
        batch: 64,
        seed: 401,
        patience: 60,
    };
    train_target(&mut model, &train, &train, &tc).unwrap();
    assert!(evaluate(&model, &train).unwrap().accuracy > 0.95);

    let ce_loss = |num: &[f64], y: usize| -> f64 {
        let mut tape = Tape::new();
        let x = Tensor::new(vec![1, 2], num.to_vec()).unwrap();
        let xv = tape.constant(&x).unwrap();
        let logits = model.forward_continuous(&mut tape, xv).unwrap();
        let loss = tape.softmax_cross_entropy(logits, &[y]).unwrap();
        tape.scalar_value(loss)
    };

    let mut fgsm_cfg = AttackConfig::new(AttackKind::Fgsm);
    fgsm_cfg.epsilon = 0.3;
    let mut pgd_cfg = AttackConfig::new(AttackKind::Pgd);
    pgd_cfg.epsilon = 0.3;
    pgd_cfg.iterations = 10;

    let mut dominated = 0;
    let trials = 1000;
    for seed in 0..trials {
        let mut trial_rng = ChaCha12Rng::seed_from_u64(500 + seed);
        let r: f64 = trial_rng.random_range(0.5..1.5);
        let theta: f64 = trial_rng.random_range(0.0..std::f64::consts::TAU);
        let raw = vec![
            RawValue::Num(r * theta.cos()),
            RawValue::Num(r * theta.sin()),
        ];
        let (num, cat) = prep.encode_row(&raw).unwrap();
        let row = EncodedRow { num, cat };
        let y = usize::from(r > 1.0);
        let a = tabattack::attacks::fgsm(&model, &prep, 0, &row, y, &fgsm_cfg).unwrap();
        let b = tabattack::attacks::pgd(&model, &prep, 0, &row, y, &pgd_cfg).unwrap();
        if ce_loss(&b.adversarial.num, y) >= ce_loss(&a.adversarial.num, y) - 1e-9 {
            dominated += 1;
        }
    }
    let rate = dominated as f64 / trials as f64;
    assert!(
        rate >= 0.95,
        "PGD dominated FGSM on only {rate:.3} of trials"
    );
}
