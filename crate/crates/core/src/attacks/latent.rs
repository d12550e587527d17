//! Latent-space attacks: the C&W-style optimisation over an additive latent
//! perturbation, its sparsity-regularised variants, latent PGD, and the
//! multiplicative DeltaZ baseline.
//!
//! During optimisation the decoder's categorical softmax probabilities occupy
//! the target model's one-hot slots, keeping the graph differentiable;
//! discretisation by argmax happens only on the final output.

use crate::attacks::{check_vae_model, finalize_outcome, AttackConfig, AttackOutcome, EncodedRow};
use crate::data::Preprocessor;
use crate::error::{Error, Result};
use crate::models::{argmax, TargetModel};
use crate::numerics::{adam_step, AdamConfig, AdamState, Tape, Tensor, Var};
use crate::vae::{VaeModel, VaeVars};

/// Sparsity penalty added to the C&W objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SparsePenalty {
    None,
    /// `Σ_i σ(steepness·|x̃_i − x_i| − threshold)` over the continuous
    /// representation: a smooth ℓ0 surrogate.
    L0Sigmoid,
    /// `Σ_i |x̃_i − x_i|`: the convex relaxation.
    L1,
}

/// Decode a perturbed latent and assemble the differentiable bridge input:
/// softmax probabilities in the one-hot slots, numeric head output in the
/// numeric block.
fn decode_bridge(vae: &VaeModel, tape: &mut Tape, vars: &VaeVars, zpert: Var) -> Result<Var> {
    let (cat_logits, num_out) = vae.decode_on_tape(tape, vars, zpert)?;
    let mut parts = Vec::with_capacity(cat_logits.len() + 1);
    for logits in cat_logits {
        parts.push(tape.softmax_rows(logits)?);
    }
    if vae.num_dim > 0 {
        parts.push(num_out);
    }
    tape.concat_cols(&parts)
}

enum LatentForm {
    /// `z + δ`
    Additive,
    /// `z ⊙ (1 + Δz)`
    Multiplicative,
}

enum LossForm {
    /// `λ·hinge + ‖δ‖²` plus an optional sparsity penalty.
    CarliniWagner(SparsePenalty),
    /// Cross-entropy ascent with signed-gradient steps in an L∞ ball.
    PgdAscent,
}

struct LoopResult {
    delta: Vec<f64>,
    iterations: usize,
}

/// Shared gradient loop over a per-sample latent perturbation.
#[allow(clippy::too_many_arguments)]
fn optimise_latent(
    vae: &VaeModel,
    model: &TargetModel,
    z: &Tensor,
    x_orig: &Tensor,
    y: usize,
    config: &AttackConfig,
    form: &LatentForm,
    loss_form: &LossForm,
) -> Result<LoopResult> {
    let k = vae.latent_dim();
    let mut delta = Tensor::zeros(vec![1, k]).with_grad();
    let mut adam = AdamState::for_params(&[&delta]);
    let adam_cfg = AdamConfig::with_lr(config.learning_rate);
    let mut iterations = config.iterations;

    for t in 1..=config.iterations {
        let mut tape = Tape::new();
        let vars = vae.bind_frozen(&mut tape)?;
        let dv = tape.leaf(&delta)?;
        let zc = tape.constant(z)?;
        let zpert = match form {
            LatentForm::Additive => tape.add(zc, dv)?,
            LatentForm::Multiplicative => {
                let scaled = tape.mul(zc, dv)?;
                tape.add(zc, scaled)?
            }
        };
        let bridge = decode_bridge(vae, &mut tape, &vars, zpert)?;
        let logits = model.forward_frozen(&mut tape, bridge)?;

        let loss = match loss_form {
            LossForm::CarliniWagner(penalty) => {
                let sq = tape.square(dv)?;
                let mut loss = tape.sum(sq)?;
                if config.lambda != 0.0 {
                    let hinge = tape.margin_hinge(logits, &[y], config.kappa)?;
                    let weighted = tape.scale(hinge, config.lambda)?;
                    loss = tape.add(loss, weighted)?;
                }
                if config.sparsity_weight != 0.0 && *penalty != SparsePenalty::None {
                    let xo = tape.constant(x_orig)?;
                    let diff = tape.sub(bridge, xo)?;
                    let dist = tape.abs(diff)?;
                    let term = match penalty {
                        SparsePenalty::L1 => tape.sum(dist)?,
                        SparsePenalty::L0Sigmoid => {
                            let steep = tape.scale(dist, config.sigmoid_steepness)?;
                            let shifted = tape.add_scalar(steep, -config.sigmoid_threshold)?;
                            let soft = tape.sigmoid(shifted)?;
                            tape.sum(soft)?
                        }
                        SparsePenalty::None => unreachable!(),
                    };
                    let weighted = tape.scale(term, config.sparsity_weight)?;
                    loss = tape.add(loss, weighted)?;
                }
                loss
            }
            LossForm::PgdAscent => tape.softmax_cross_entropy(logits, &[y])?,
        };

        let loss_value = tape.scalar_value(loss);
        if !loss_value.is_finite() {
            return Err(Error::NonFinite { op: "attack_loss" });
        }
        let grads = tape.backward(loss)?;
        let g = grads.wrt(dv);
        let previous = delta.data().to_vec();

        match loss_form {
            LossForm::CarliniWagner(_) => {
                if config.use_adam {
                    adam_step(&mut [&mut delta], &[g], &mut adam, &adam_cfg)?;
                } else {
                    let data = delta.data_mut();
                    for (d, gi) in data.iter_mut().zip(&g) {
                        *d -= config.learning_rate * gi;
                    }
                }
                let step: f64 = delta
                    .data()
                    .iter()
                    .zip(&previous)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                if step < config.tau {
                    iterations = t;
                    break;
                }
            }
            LossForm::PgdAscent => {
                let step = config.pgd_step_size();
                let data = delta.data_mut();
                for (d, gi) in data.iter_mut().zip(&g) {
                    let s = if *gi > 0.0 {
                        1.0
                    } else if *gi < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    *d = (*d + step * s).clamp(-config.epsilon, config.epsilon);
                }
            }
        }
    }
    Ok(LoopResult {
        delta: delta.data().to_vec(),
        iterations,
    })
}

/// Decode `z + δ` (already combined) and produce the final outcome pieces:
/// continuous bridge row, discretised codes, numeric row.
fn decode_final(vae: &VaeModel, zpert: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<usize>)> {
    let z = Tensor::new(vec![1, zpert.len()], zpert.to_vec())?;
    let (cat_logits, num_out) = vae.decode(&z)?;
    let mut continuous = Vec::new();
    let mut codes = Vec::with_capacity(cat_logits.len());
    for logits in &cat_logits {
        let row = logits.data();
        let maxv = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&v| (v - maxv).exp()).collect();
        let total: f64 = exps.iter().sum();
        continuous.extend(exps.iter().map(|e| e / total));
        codes.push(argmax(row));
    }
    let num = if vae.num_dim > 0 {
        num_out.data().to_vec()
    } else {
        Vec::new()
    };
    continuous.extend(&num);
    Ok((continuous, num, codes))
}

fn encode_single(vae: &VaeModel, row: &EncodedRow) -> Result<Tensor> {
    let num = Tensor::new(vec![1, row.num.len()], row.num.clone())?;
    vae.encode_mu(&num, std::slice::from_ref(&row.cat))
}

#[allow(clippy::too_many_arguments)]
fn run_latent_attack(
    vae: &VaeModel,
    model: &TargetModel,
    prep: &Preprocessor,
    index: usize,
    row: &EncodedRow,
    y: usize,
    config: &AttackConfig,
    form: LatentForm,
    loss_form: LossForm,
    note: Option<String>,
) -> Result<AttackOutcome> {
    check_vae_model(vae, model)?;
    let z = encode_single(vae, row)?;
    let x_orig = Tensor::new(
        vec![1, model.spec().input_width()],
        model.spec().encode_row(&row.num, &row.cat)?,
    )?;
    let result = optimise_latent(vae, model, &z, &x_orig, y, config, &form, &loss_form)?;

    // Effective additive latent displacement; for the multiplicative form
    // this is z ⊙ Δz, so latent_adv = z + displacement in both cases.
    let displacement: Vec<f64> = match form {
        LatentForm::Additive => result.delta.clone(),
        LatentForm::Multiplicative => z
            .data()
            .iter()
            .zip(&result.delta)
            .map(|(zi, di)| zi * di)
            .collect(),
    };
    let zpert: Vec<f64> = z
        .data()
        .iter()
        .zip(&displacement)
        .map(|(a, b)| a + b)
        .collect();
    let (continuous, adv_num, adv_cat) = decode_final(vae, &zpert)?;
    finalize_outcome(
        model,
        prep,
        index,
        y,
        row,
        adv_num,
        adv_cat,
        &continuous,
        Some(displacement),
        result.iterations,
        Some(zpert),
        note,
        config.numeric_change_tol,
    )
}

/// The latent C&W attack: minimise
/// `λ·max(f(x̃)_y − max_{i≠y} f(x̃)_i + κ, 0) + ‖δ‖²` over an additive latent
/// perturbation, breaking once the δ update falls below τ.
pub fn latent_cw(
    vae: &VaeModel,
    model: &TargetModel,
    prep: &Preprocessor,
    index: usize,
    row: &EncodedRow,
    y: usize,
    config: &AttackConfig,
) -> Result<AttackOutcome> {
    run_latent_attack(
        vae,
        model,
        prep,
        index,
        row,
        y,
        config,
        LatentForm::Additive,
        LossForm::CarliniWagner(SparsePenalty::None),
        None,
    )
}

/// Latent C&W with an explicit sparsity penalty over the continuous
/// reconstruction. A zero `sparsity_weight` reproduces `latent_cw` exactly.
#[allow(clippy::too_many_arguments)]
pub fn latent_cw_sparse(
    vae: &VaeModel,
    model: &TargetModel,
    prep: &Preprocessor,
    index: usize,
    row: &EncodedRow,
    y: usize,
    config: &AttackConfig,
    penalty: SparsePenalty,
) -> Result<AttackOutcome> {
    run_latent_attack(
        vae,
        model,
        prep,
        index,
        row,
        y,
        config,
        LatentForm::Additive,
        LossForm::CarliniWagner(penalty),
        None,
    )
}

/// Signed-gradient L∞ PGD applied to δ in latent space, decoding like the
/// C&W attack.
pub fn pgd_vae(
    vae: &VaeModel,
    model: &TargetModel,
    prep: &Preprocessor,
    index: usize,
    row: &EncodedRow,
    y: usize,
    config: &AttackConfig,
) -> Result<AttackOutcome> {
    run_latent_attack(
        vae,
        model,
        prep,
        index,
        row,
        y,
        config,
        LatentForm::Additive,
        LossForm::PgdAscent,
        None,
    )
}

/// Multiplicative perturbation `z ⊙ (1 + Δz)`, optimised with the same margin
/// objective and budget as the C&W attack. Binary classification only.
pub fn deltaz(
    vae: &VaeModel,
    model: &TargetModel,
    prep: &Preprocessor,
    index: usize,
    row: &EncodedRow,
    y: usize,
    config: &AttackConfig,
) -> Result<AttackOutcome> {
    if model.class_count() != 2 {
        return Err(Error::Unsupported(format!(
            "deltaz handles binary classification only, got {} classes",
            model.class_count()
        )));
    }
    run_latent_attack(
        vae,
        model,
        prep,
        index,
        row,
        y,
        config,
        LatentForm::Multiplicative,
        LossForm::CarliniWagner(SparsePenalty::None),
        None,
    )
}
