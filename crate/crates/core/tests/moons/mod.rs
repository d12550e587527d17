#![allow(dead_code)]

//! Shared desk-scale fixture: a seeded two-moon mixed-type dataset
//! (2 numerics, one 4-level categorical, one binary), a trained VAE, and a
//! trained MLP target.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::Normal;
use std::path::Path;
use std::sync::OnceLock;
use tabattack::data::{
    fit_transform, stratified_split, Dataset, EncodedDataset, Preprocessor, RawValue, SplitTag,
    TabularSchema,
};
use tabattack::models::{train_target, InputSpec, MlpConfig, MlpModel, TargetModel, TrainConfig};
use tabattack::vae::{fit_latent_stats, train_vae, LatentStats, VaeConfig, VaeModel};

pub struct MoonFixture {
    pub vae: VaeModel,
    pub model: TargetModel,
    pub prep: Preprocessor,
    pub test: EncodedDataset,
    pub stats: LatentStats,
}

const SCHEMA_JSON: &str = r#"{
    "columns": [
        {"name": "x0", "kind": "numeric"},
        {"name": "x1", "kind": "numeric"},
        {"name": "xbin", "kind": "categorical", "categories": ["x0", "x1", "x2", "x3"]},
        {"name": "ybin", "kind": "binary", "categories": ["y0", "y1"]}
    ],
    "target": {"name": "label", "classes": ["neg", "pos"]}
}"#;

/// One moon point: class, coordinates, derived categorical levels.
fn moon_row(rng: &mut ChaCha12Rng) -> (usize, f64, f64, usize, usize) {
    let noise = Normal::new(0.0, 0.18).unwrap();
    let y = rng.random_range(0..2usize);
    let t: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let (mut px, mut py) = if y == 0 {
        (t.cos(), t.sin())
    } else {
        (1.0 - t.cos(), 0.4 - t.sin())
    };
    px += rng.sample(noise);
    py += rng.sample(noise);
    let xb = if px < -0.3 {
        0
    } else if px < 0.5 {
        1
    } else if px < 1.3 {
        2
    } else {
        3
    };
    let yb = usize::from(py <= 0.2);
    (y, px, py, xb, yb)
}

pub fn moon_dataset(seed: u64, n: usize) -> Dataset {
    let schema = TabularSchema::from_json(SCHEMA_JSON).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let (y, px, py, xb, yb) = moon_row(&mut rng);
        rows.push(vec![
            RawValue::Num(px),
            RawValue::Num(py),
            RawValue::Cat(format!("x{xb}")),
            RawValue::Cat(format!("y{yb}")),
        ]);
        labels.push(y);
    }
    Dataset {
        schema,
        rows,
        labels,
    }
}

/// Write the same dataset as CSV + schema files (for CLI-level tests).
pub fn write_moons_csv(csv: &Path, schema: &Path, seed: u64, n: usize) {
    let ds = moon_dataset(seed, n);
    let mut body = String::from("x0,x1,xbin,ybin,label\n");
    for (row, &y) in ds.rows.iter().zip(&ds.labels) {
        body.push_str(&format!(
            "{:.6},{:.6},{},{},{}\n",
            row[0].as_num().unwrap(),
            row[1].as_num().unwrap(),
            row[2].as_cat().unwrap(),
            row[3].as_cat().unwrap(),
            if y == 0 { "neg" } else { "pos" },
        ));
    }
    std::fs::write(csv, body).unwrap();
    std::fs::write(schema, SCHEMA_JSON).unwrap();
}

/// Split, fit, and train the full fixture.
pub fn train_fixture(seed: u64, n: usize, latent_dim: usize, vae_epochs: usize) -> MoonFixture {
    let ds = moon_dataset(seed, n);
    let manifest = stratified_split(&ds, (0.70, 0.10, 0.20), seed).unwrap();
    let (prep, train) = fit_transform(&ds.subset(&manifest.train)).unwrap();
    let val = prep
        .transform(&ds.subset(&manifest.val), SplitTag::Val)
        .unwrap();
    let test = prep
        .transform(&ds.subset(&manifest.test), SplitTag::Test)
        .unwrap();

    let spec = InputSpec {
        num_dim: prep.num_dim(),
        cat_cardinalities: prep.cardinalities(),
        one_hot: true,
        class_count: prep.class_count(),
    };
    let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(1));
    let mut model = TargetModel::Mlp(MlpModel::new(
        spec,
        &MlpConfig { hidden: vec![16] },
        &mut rng,
    ));
    let train_cfg = TrainConfig {
        epochs: 30,
        lr: 1e-2,
        batch: 64,
        seed: seed.wrapping_add(2),
        patience: 30,
    };
    train_target(&mut model, &train, &val, &train_cfg).unwrap();

    let mut vae = VaeModel::new(
        prep.num_dim(),
        prep.cardinalities(),
        prep.class_count(),
        VaeConfig {
            encode_widths: vec![32, 16],
            latent_dim,
            epochs: vae_epochs,
            kl_weight: 1e-3,
            cls_weight: 1.0,
            lr: 1e-2,
            batch: 128,
            seed: seed.wrapping_add(3),
        },
    )
    .unwrap();
    let combined = concat(&train, &val);
    train_vae(&mut vae, &combined, Some(&val), None).unwrap();
    let stats = fit_latent_stats(&vae, &train).unwrap();

    MoonFixture {
        vae,
        model,
        prep,
        test,
        stats,
    }
}

fn concat(a: &EncodedDataset, b: &EncodedDataset) -> EncodedDataset {
    let mut num = a.num.data().to_vec();
    num.extend_from_slice(b.num.data());
    let mut cat = a.cat.clone();
    cat.extend(b.cat.iter().cloned());
    let mut y = a.y.clone();
    y.extend(&b.y);
    EncodedDataset {
        num: tabattack::numerics::Tensor::new(vec![a.len() + b.len(), a.num_dim()], num).unwrap(),
        cat,
        y,
        split: a.split,
    }
}

static STANDARD: OnceLock<MoonFixture> = OnceLock::new();

/// The criterion-5/6 fixture: n = 2000, latent dim 2, 60 VAE epochs.
pub fn standard_fixture() -> &'static MoonFixture {
    STANDARD.get_or_init(|| train_fixture(51, 2000, 2, 60))
}

/// A minimal 3-class fixture for unsupported-task guards. Models are
/// untrained; only the schema shape matters.
pub fn three_class_fixture(seed: u64) -> MoonFixture {
    let schema = TabularSchema::from_json(
        r#"{
            "columns": [
                {"name": "a", "kind": "numeric"},
                {"name": "b", "kind": "numeric"}
            ],
            "target": {"name": "y", "classes": ["c0", "c1", "c2"]}
        }"#,
    )
    .unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..30 {
        rows.push(vec![
            RawValue::Num(rng.random_range(-1.0..1.0)),
            RawValue::Num(rng.random_range(-1.0..1.0)),
        ]);
        labels.push(i % 3);
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
        class_count: 3,
    };
    let model = TargetModel::Mlp(MlpModel::new(
        spec,
        &MlpConfig { hidden: vec![4] },
        &mut rng,
    ));
    let vae = VaeModel::new(
        2,
        vec![],
        3,
        VaeConfig {
            encode_widths: vec![8],
            latent_dim: 2,
            epochs: 1,
            ..VaeConfig::default()
        },
    )
    .unwrap();
    let stats = fit_latent_stats(&vae, &train).unwrap();
    MoonFixture {
        vae,
        model,
        prep,
        test: train,
        stats,
    }
}
