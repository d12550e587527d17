//! Seeded stratified splitting with per-class largest-remainder allocation.

use crate::data::dataset::Dataset;
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// Row indices per split, enough to reproduce an experiment exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub ratios: (f64, f64, f64),
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitManifest {
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.train.len(), self.val.len(), self.test.len())
    }
}

/// Per-class sample counts for (train, val, test) under largest-remainder
/// allocation: floors first, then leftover samples to the splits with the
/// largest fractional remainders (ties resolved in split order).
pub fn allocate_class(n: usize, ratios: (f64, f64, f64)) -> [usize; 3] {
    let shares = [ratios.0, ratios.1, ratios.2];
    let mut counts = [0usize; 3];
    let mut fracs = [0f64; 3];
    let mut assigned = 0;
    for i in 0..3 {
        let exact = shares[i] * n as f64;
        counts[i] = exact.floor() as usize;
        fracs[i] = exact - exact.floor();
        assigned += counts[i];
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| fracs[b].partial_cmp(&fracs[a]).unwrap().then(a.cmp(&b)));
    let mut leftover = n - assigned;
    for &i in &order {
        if leftover == 0 {
            break;
        }
        counts[i] += 1;
        leftover -= 1;
    }
    counts
}

/// Stratified (train, val, test) split. Per-class proportions land within one
/// sample of the global ratios; splits are disjoint and exhaustive; identical
/// seeds give identical membership.
pub fn stratified_split(
    dataset: &Dataset,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<SplitManifest> {
    let total = ratios.0 + ratios.1 + ratios.2;
    if !(total - 1.0).abs().lt(&1e-9) || ratios.0 <= 0.0 || ratios.1 < 0.0 || ratios.2 < 0.0 {
        return Err(Error::Split(format!(
            "ratios must be non-negative and sum to 1, got {ratios:?}"
        )));
    }
    let class_count = dataset.schema.class_count();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); class_count];
    for (i, &y) in dataset.labels.iter().enumerate() {
        by_class[y].push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        if members.len() < 3 {
            return Err(Error::Split(format!(
                "class {c} has only {} samples; need at least 3",
                members.len()
            )));
        }
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut manifest = SplitManifest {
        seed,
        ratios,
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for mut members in by_class {
        members.shuffle(&mut rng);
        let [n_train, n_val, _] = allocate_class(members.len(), ratios);
        manifest.train.extend(&members[..n_train]);
        manifest.val.extend(&members[n_train..n_train + n_val]);
        manifest.test.extend(&members[n_train + n_val..]);
    }
    manifest.train.sort_unstable();
    manifest.val.sort_unstable();
    manifest.test.sort_unstable();
    Ok(manifest)
}
