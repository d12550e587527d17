//! Post-hoc greedy feature pruning: revert low-impact changed features while
//! the adversarial example keeps fooling the model.

use crate::attacks::{logits_row, misclass_margin, AttackOutcome};
use crate::data::Preprocessor;
use crate::error::Result;
use crate::models::TargetModel;
use crate::vae::VaeModel;

enum Slot {
    Num(usize),
    Cat(usize),
}

/// Which encoded slot a schema column maps to.
fn slot_of(prep: &Preprocessor, column: usize) -> Option<Slot> {
    if let Some(j) = prep.numeric.iter().position(|s| s.column == column) {
        return Some(Slot::Num(j));
    }
    prep.categorical
        .iter()
        .position(|m| m.column == column)
        .map(Slot::Cat)
}

fn revert(num: &mut [f64], cat: &mut [usize], original: (&[f64], &[usize]), slot: &Slot) {
    match slot {
        Slot::Num(j) => num[*j] = original.0[*j],
        Slot::Cat(j) => cat[*j] = original.1[*j],
    }
}

/// Rank changed features by how much reverting each one alone weakens the
/// misclassification margin, then revert the least impactful ones while the
/// model still mispredicts. The first revert that would restore the true
/// class (or the original prediction) stops the search. Failure to sparsify
/// returns the outcome unchanged.
pub fn greedy_sparsify(
    _vae: &VaeModel,
    model: &TargetModel,
    prep: &Preprocessor,
    outcome: &AttackOutcome,
) -> Result<AttackOutcome> {
    if !outcome.success {
        return Ok(outcome.clone());
    }
    let y = outcome.true_label;
    let changed: Vec<usize> = outcome
        .changed_mask
        .iter()
        .enumerate()
        .filter(|(_, &c)| c)
        .map(|(i, _)| i)
        .collect();
    if changed.len() <= 1 {
        return Ok(outcome.clone());
    }

    let base_margin = misclass_margin(
        &logits_row(model, &outcome.adversarial.num, &outcome.adversarial.cat)?,
        y,
    );

    // Impact of reverting each changed feature alone: margin drop.
    let mut ranked: Vec<(usize, f64)> = Vec::with_capacity(changed.len());
    for &col in &changed {
        let Some(slot) = slot_of(prep, col) else {
            continue;
        };
        let mut num = outcome.adversarial.num.clone();
        let mut cat = outcome.adversarial.cat.clone();
        revert(
            &mut num,
            &mut cat,
            (&outcome.original.num, &outcome.original.cat),
            &slot,
        );
        let margin = misclass_margin(&logits_row(model, &num, &cat)?, y);
        ranked.push((col, base_margin - margin));
    }
    ranked.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));

    let mut num = outcome.adversarial.num.clone();
    let mut cat = outcome.adversarial.cat.clone();
    let mut reverted: Vec<usize> = Vec::new();
    for (col, _) in ranked {
        let Some(slot) = slot_of(prep, col) else {
            continue;
        };
        let mut trial_num = num.clone();
        let mut trial_cat = cat.clone();
        revert(
            &mut trial_num,
            &mut trial_cat,
            (&outcome.original.num, &outcome.original.cat),
            &slot,
        );
        let pred = model.predict_row(&trial_num, &trial_cat)?;
        if pred != y && pred != outcome.pred_original {
            num = trial_num;
            cat = trial_cat;
            reverted.push(col);
        } else {
            break;
        }
    }
    if reverted.is_empty() {
        return Ok(outcome.clone());
    }

    // Rebuild the record over the pruned row. The recorded latent point and
    // δ stay those of the generating attack; only the raw-space artefact
    // changed.
    let continuous = model.spec().encode_row(&num, &cat)?;
    let mut pruned = crate::attacks::finalize_outcome(
        model,
        prep,
        outcome.index,
        y,
        &outcome.original,
        num,
        cat,
        &continuous,
        outcome.delta.clone(),
        outcome.iterations,
        outcome.latent_adv.clone(),
        Some(format!("greedy: reverted {} features", reverted.len())),
        1e-3,
    )?;
    // The mask follows exactly from the original one: reverted columns hold
    // their original values again, untouched columns keep their verdict.
    pruned.changed_mask = outcome
        .changed_mask
        .iter()
        .enumerate()
        .map(|(col, &was)| was && !reverted.contains(&col))
        .collect();
    // Reverts were only accepted while the prediction stayed flipped.
    debug_assert!(pruned.success);
    pruned.l2_delta = outcome.l2_delta;
    Ok(pruned)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::EncodedRow;
    use crate::data::{Dataset, RawValue, TabularSchema};
    use crate::models::{InputSpec, MlpConfig, MlpModel};
    use crate::numerics::Tensor;
    use crate::vae::VaeConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn prep_4num() -> Preprocessor {
        let schema = TabularSchema::from_json(
            r#"{
                "columns": [
                    {"name": "f0", "kind": "numeric"},
                    {"name": "f1", "kind": "numeric"},
                    {"name": "f2", "kind": "numeric"},
                    {"name": "f3", "kind": "numeric"}
                ],
                "target": {"name": "y", "classes": ["n", "p"]}
            }"#,
        )
        .unwrap();
        let rows = (0..8)
            .map(|i| {
                (0..4)
                    .map(|j| RawValue::Num((i * 4 + j) as f64))
                    .collect::<Vec<_>>()
            })
            .collect();
        let ds = Dataset {
            schema,
            rows,
            labels: vec![0, 1, 0, 1, 0, 1, 0, 1],
        };
        Preprocessor::fit(&ds).unwrap()
    }

    /// Model that depends only on feature 0: logit_1 − logit_0 = 4·x0.
    fn feature0_model() -> TargetModel {
        let spec = InputSpec {
            num_dim: 4,
            cat_cardinalities: vec![],
            one_hot: true,
            class_count: 2,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(700);
        let mut mlp = MlpModel::new(spec, &MlpConfig { hidden: vec![] }, &mut rng);
        mlp.weights[0] = Tensor::new(vec![4, 2], vec![-2.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
            .unwrap()
            .with_grad();
        mlp.biases[0] = Tensor::zeros(vec![1, 2]).with_grad();
        TargetModel::Mlp(mlp)
    }

    fn dummy_vae() -> VaeModel {
        VaeModel::new(
            4,
            vec![],
            2,
            VaeConfig {
                encode_widths: vec![4],
                latent_dim: 2,
                ..VaeConfig::default()
            },
        )
        .unwrap()
    }

    fn outcome_changing(model: &TargetModel, prep: &Preprocessor, cols: &[usize]) -> AttackOutcome {
        // Original: x0 = −1 (class 0); adversarial flips x0 to +1 and also
        // touches the listed nuisance columns.
        let original = EncodedRow {
            num: vec![-1.0, 0.0, 0.0, 0.0],
            cat: vec![],
        };
        let mut adv = original.num.clone();
        adv[0] = 1.0;
        for &c in cols {
            if c != 0 {
                adv[c] = 0.5;
            }
        }
        let continuous = model.spec().encode_row(&adv, &[]).unwrap();
        crate::attacks::finalize_outcome(
            model,
            prep,
            0,
            0,
            &original,
            adv,
            vec![],
            &continuous,
            Some(vec![0.3, -0.2]),
            5,
            Some(vec![0.1, 0.2]),
            None,
            1e-3,
        )
        .unwrap()
    }

    #[test]
    fn reverts_nuisance_feature_and_keeps_success() {
        let model = feature0_model();
        let prep = prep_4num();
        let vae = dummy_vae();
        let out = outcome_changing(&model, &prep, &[0, 3]);
        assert!(out.success);
        assert_eq!(out.changed_mask, vec![true, false, false, true]);
        let pruned = greedy_sparsify(&vae, &model, &prep, &out).unwrap();
        assert!(pruned.success);
        // ℓ0 dropped 2 → 1: only the load-bearing feature remains changed.
        assert_eq!(pruned.changed_mask, vec![true, false, false, false]);
        assert_eq!(pruned.adversarial.num[3], 0.0);
    }

    #[test]
    fn single_changed_feature_is_returned_unchanged() {
        let model = feature0_model();
        let prep = prep_4num();
        let vae = dummy_vae();
        let out = outcome_changing(&model, &prep, &[0]);
        assert_eq!(out.changed_mask.iter().filter(|&&c| c).count(), 1);
        let pruned = greedy_sparsify(&vae, &model, &prep, &out).unwrap();
        assert_eq!(pruned.adversarial, out.adversarial);
        assert_eq!(pruned.changed_mask, out.changed_mask);
    }

    #[test]
    fn failed_outcome_passes_through() {
        let model = feature0_model();
        let prep = prep_4num();
        let vae = dummy_vae();
        let mut out = outcome_changing(&model, &prep, &[0, 2]);
        out.success = false;
        let pruned = greedy_sparsify(&vae, &model, &prep, &out).unwrap();
        assert_eq!(pruned.adversarial, out.adversarial);
    }

    #[test]
    fn never_converts_success_into_failure() {
        let model = feature0_model();
        let prep = prep_4num();
        let vae = dummy_vae();
        for cols in [vec![0usize], vec![0, 1], vec![0, 1, 2], vec![0, 1, 2, 3]] {
            let out = outcome_changing(&model, &prep, &cols);
            if !out.success {
                continue;
            }
            let pruned = greedy_sparsify(&vae, &model, &prep, &out).unwrap();
            assert!(pruned.success, "pruning lost success for {cols:?}");
        }
    }
}
