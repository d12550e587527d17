//! Input-space baselines operating on the one-hot + numeric representation.

use crate::attacks::{finalize_outcome, AttackConfig, AttackOutcome, EncodedRow, EpsilonScale};
use crate::data::Preprocessor;
use crate::error::Result;
use crate::models::TargetModel;
use crate::numerics::{Tape, Tensor};

/// Gradient of the cross-entropy loss w.r.t. the continuous input row.
fn input_gradient(model: &TargetModel, x: &[f64], y: usize) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let xt = Tensor::new(vec![1, x.len()], x.to_vec())?.with_grad();
    let xv = tape.leaf(&xt)?;
    let logits = model.forward_continuous(&mut tape, xv)?;
    let loss = tape.softmax_cross_entropy(logits, &[y])?;
    let grads = tape.backward(loss)?;
    Ok(grads.wrt(xv))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Clip perturbed numerics to the observed training range (optional).
fn clip_numeric_block(model: &TargetModel, prep: &Preprocessor, row: &mut [f64]) {
    let spec = model.spec();
    let off = spec.num_offset();
    for (j, stat) in prep.numeric.iter().enumerate() {
        let lo = (stat.min - stat.mean) / stat.std;
        let hi = (stat.max - stat.mean) / stat.std;
        row[off + j] = row[off + j].clamp(lo, hi);
    }
}

/// Per-coordinate ε multiplier of the continuous representation: 1 for
/// one-hot slots, and under feature-range scaling the observed range of each
/// z-scored numeric column.
fn epsilon_scales(model: &TargetModel, prep: &Preprocessor, config: &AttackConfig) -> Vec<f64> {
    let spec = model.spec();
    let mut scales = vec![1.0; spec.input_width()];
    if config.epsilon_scale == EpsilonScale::FeatureRange {
        let off = spec.num_offset();
        for (j, stat) in prep.numeric.iter().enumerate() {
            scales[off + j] = (stat.max - stat.min) / stat.std;
        }
    }
    scales
}

/// Shared core: accumulate a signed-gradient perturbation for `steps`
/// iterations with per-step projection into the L∞ ball of radius `epsilon`,
/// then discretise once. FGSM is the single-step instance with step size ε.
#[allow(clippy::too_many_arguments)]
fn signed_gradient_attack(
    model: &TargetModel,
    prep: &Preprocessor,
    index: usize,
    row: &EncodedRow,
    y: usize,
    config: &AttackConfig,
    steps: usize,
    step_size: f64,
) -> Result<AttackOutcome> {
    let spec = model.spec();
    let x0 = spec.encode_row(&row.num, &row.cat)?;
    let width = x0.len();
    let scales = epsilon_scales(model, prep, config);
    let mut perturbation = vec![0.0; width];
    let mut flat_gradient = true;
    for _ in 0..steps {
        let current: Vec<f64> = x0.iter().zip(&perturbation).map(|(a, p)| a + p).collect();
        let grad = input_gradient(model, &current, y)?;
        if grad.iter().any(|&g| g != 0.0) {
            flat_gradient = false;
        }
        for (j, (p, g)) in perturbation.iter_mut().zip(&grad).enumerate() {
            let bound = config.epsilon * scales[j];
            *p = (*p + step_size * scales[j] * sign(*g)).clamp(-bound, bound);
        }
    }
    let mut adv_continuous: Vec<f64> = x0.iter().zip(&perturbation).map(|(a, p)| a + p).collect();
    if config.clip_numeric {
        clip_numeric_block(model, prep, &mut adv_continuous);
    }
    let (adv_num, adv_cat) = spec.discretise(&adv_continuous);
    let note = if flat_gradient {
        Some("flat gradient".to_string())
    } else {
        None
    };
    finalize_outcome(
        model,
        prep,
        index,
        y,
        row,
        adv_num,
        adv_cat,
        &adv_continuous,
        None,
        steps,
        None,
        note,
        config.numeric_change_tol,
    )
}

/// Single signed-gradient step of magnitude ε on the full input
/// representation; categoricals re-discretised by per-column argmax.
pub fn fgsm(
    model: &TargetModel,
    prep: &Preprocessor,
    index: usize,
    row: &EncodedRow,
    y: usize,
    config: &AttackConfig,
) -> Result<AttackOutcome> {
    signed_gradient_attack(model, prep, index, row, y, config, 1, config.epsilon)
}

/// Iterative L∞ attack: `T` signed-gradient steps, each projected into the
/// ε-ball around the original representation, discretised once at the end.
pub fn pgd(
    model: &TargetModel,
    prep: &Preprocessor,
    index: usize,
    row: &EncodedRow,
    y: usize,
    config: &AttackConfig,
) -> Result<AttackOutcome> {
    signed_gradient_attack(
        model,
        prep,
        index,
        row,
        y,
        config,
        config.iterations,
        config.pgd_step_size(),
    )
}
