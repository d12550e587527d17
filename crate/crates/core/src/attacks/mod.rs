//! Attack algorithms: input-space FGSM/PGD baselines, the latent C&W attack,
//! PGD in latent space, multiplicative DeltaZ, sparsity-regularised variants,
//! and greedy post-hoc feature pruning.
//!
//! Attacks over a batch are embarrassingly parallel: models are read-only,
//! optimiser state is per-sample, and results are merged in input order.

mod greedy;
mod input_space;
mod latent;

pub use greedy::greedy_sparsify;
pub use input_space::{fgsm, pgd};
pub use latent::{deltaz, latent_cw, latent_cw_sparse, pgd_vae, SparsePenalty};

use crate::data::{Preprocessor, RawRow, RawValue};
use crate::error::{Error, Result};
use crate::models::TargetModel;
use crate::numerics::{Tape, Tensor};
use crate::vae::VaeModel;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Fgsm,
    Pgd,
    LatentCw,
    PgdVae,
    #[serde(rename = "deltaz")]
    DeltaZ,
    LatentCwL0,
    LatentCwL1,
    LatentCwGreedy,
}

impl AttackKind {
    pub fn needs_vae(self) -> bool {
        !matches!(self, AttackKind::Fgsm | AttackKind::Pgd)
    }

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Fgsm => "fgsm",
            AttackKind::Pgd => "pgd",
            AttackKind::LatentCw => "latent_cw",
            AttackKind::PgdVae => "pgd_vae",
            AttackKind::DeltaZ => "deltaz",
            AttackKind::LatentCwL0 => "latent_cw_l0",
            AttackKind::LatentCwL1 => "latent_cw_l1",
            AttackKind::LatentCwGreedy => "latent_cw_greedy",
        }
    }
}

/// Attack hyperparameters, shared across all algorithms. Fields an algorithm
/// does not use are ignored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// Input-space (or latent PGD) L∞ budget.
    #[serde(default = "defaults::epsilon")]
    pub epsilon: f64,
    /// Iteration limit T.
    #[serde(default = "defaults::iterations")]
    pub iterations: usize,
    /// Learning rate η of the latent optimisation.
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    /// Margin weight λ of the C&W objective.
    #[serde(default = "defaults::lambda")]
    pub lambda: f64,
    /// Confidence margin κ.
    #[serde(default)]
    pub kappa: f64,
    /// Convergence threshold τ on ‖δ_t − δ_{t−1}‖₂.
    #[serde(default = "defaults::tau")]
    pub tau: f64,
    /// Weight of the sparsity penalty (L0-sigmoid or L1 variants).
    #[serde(default)]
    pub sparsity_weight: f64,
    /// Steepness of the sigmoid ℓ0 approximation.
    #[serde(default = "defaults::sigmoid_steepness")]
    pub sigmoid_steepness: f64,
    /// Threshold of the sigmoid ℓ0 approximation.
    #[serde(default = "defaults::sigmoid_threshold")]
    pub sigmoid_threshold: f64,
    #[serde(default)]
    pub seed: u64,
    /// Adam (default) or plain gradient descent inside the latent loop.
    #[serde(default = "defaults::use_adam")]
    pub use_adam: bool,
    /// Optionally clip perturbed numerics to the observed training range.
    #[serde(default)]
    pub clip_numeric: bool,
    /// Raw-space threshold deciding whether a numeric feature counts as
    /// changed in the per-feature mask.
    #[serde(default = "defaults::numeric_change_tol")]
    pub numeric_change_tol: f64,
    /// PGD step size; defaults to ε/T.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pgd_step: Option<f64>,
    /// How input-space ε is measured: directly in the continuous encoded
    /// representation, or as a fraction of each feature's observed range
    /// (the grid-searched setting of the source evaluation).
    #[serde(default)]
    pub epsilon_scale: EpsilonScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonScale {
    #[default]
    Absolute,
    FeatureRange,
}

mod defaults {
    pub fn epsilon() -> f64 {
        0.5
    }
    pub fn iterations() -> usize {
        300
    }
    pub fn learning_rate() -> f64 {
        0.1
    }
    pub fn lambda() -> f64 {
        1.0
    }
    pub fn tau() -> f64 {
        1e-5
    }
    pub fn sigmoid_steepness() -> f64 {
        20.0
    }
    pub fn sigmoid_threshold() -> f64 {
        0.1
    }
    pub fn use_adam() -> bool {
        true
    }
    pub fn numeric_change_tol() -> f64 {
        1e-3
    }
}

impl AttackConfig {
    pub fn new(kind: AttackKind) -> Self {
        Self {
            kind,
            epsilon: defaults::epsilon(),
            iterations: defaults::iterations(),
            learning_rate: defaults::learning_rate(),
            lambda: defaults::lambda(),
            kappa: 0.0,
            tau: defaults::tau(),
            sparsity_weight: 0.0,
            sigmoid_steepness: defaults::sigmoid_steepness(),
            sigmoid_threshold: defaults::sigmoid_threshold(),
            seed: 0,
            use_adam: defaults::use_adam(),
            clip_numeric: false,
            numeric_change_tol: defaults::numeric_change_tol(),
            pgd_step: None,
            epsilon_scale: EpsilonScale::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon < 0.0 {
            return Err(Error::Config("epsilon must be >= 0".into()));
        }
        if self.iterations < 1 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if self.lambda < 0.0 || self.kappa < 0.0 {
            return Err(Error::Config("lambda and kappa must be >= 0".into()));
        }
        if self.tau <= 0.0 {
            return Err(Error::Config("tau must be > 0".into()));
        }
        Ok(())
    }

    pub fn pgd_step_size(&self) -> f64 {
        self.pgd_step
            .unwrap_or(self.epsilon / self.iterations as f64)
    }
}

/// One sample in encoded space: z-scored numerics plus category codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedRow {
    pub num: Vec<f64>,
    pub cat: Vec<usize>,
}

/// Per-sample attack record. `success` is re-verified with a fresh forward
/// pass on the final discretised row, never trusted from the loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackOutcome {
    /// Position of the sample in the attacked batch.
    pub index: usize,
    pub true_label: usize,
    pub pred_original: usize,
    pub pred_adversarial: usize,
    /// Prediction flipped relative to the original prediction.
    pub success: bool,
    pub original: EncodedRow,
    pub adversarial: EncodedRow,
    pub adversarial_raw: RawRow,
    /// Latent perturbation (latent attacks only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Vec<f64>>,
    pub iterations: usize,
    /// ‖δ‖₂ where δ exists.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l2_delta: Option<f64>,
    /// Raw-space change mask in schema column order: categorical changed iff
    /// the label differs, numeric iff |Δ| exceeds the configured tolerance.
    pub changed_mask: Vec<bool>,
    /// ℓ1 distance between the continuous adversarial representation and the
    /// original one-hot + numeric representation.
    pub l1_encoded: f64,
    /// Latent point used for Mahalanobis distance: `z + δ` for latent
    /// attacks, `encode(x̃)` attached by the driver for input-space attacks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_adv: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Logits of one encoded row.
pub(crate) fn logits_row(model: &TargetModel, num: &[f64], cat: &[usize]) -> Result<Vec<f64>> {
    let spec = model.spec();
    let mut tape = Tape::new();
    let x = Tensor::new(vec![1, spec.input_width()], spec.encode_row(num, cat)?)?;
    let xv = tape.constant(&x)?;
    let logits = model.forward_continuous(&mut tape, xv)?;
    Ok(tape.value(logits).to_vec())
}

/// Misclassification margin w.r.t. the true label: positive once the model
/// prefers some other class.
pub(crate) fn misclass_margin(logits: &[f64], y: usize) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for (j, &v) in logits.iter().enumerate() {
        if j != y && v > best {
            best = v;
        }
    }
    best - logits[y]
}

/// Assemble the final outcome record: fresh predictions, raw rows, change
/// mask, encoded ℓ1.
#[allow(clippy::too_many_arguments)]
pub(crate) fn finalize_outcome(
    model: &TargetModel,
    prep: &Preprocessor,
    index: usize,
    true_label: usize,
    original: &EncodedRow,
    adv_num: Vec<f64>,
    adv_cat: Vec<usize>,
    adv_continuous: &[f64],
    delta: Option<Vec<f64>>,
    iterations: usize,
    latent_adv: Option<Vec<f64>>,
    note: Option<String>,
    numeric_change_tol: f64,
) -> Result<AttackOutcome> {
    let pred_original = model.predict_row(&original.num, &original.cat)?;
    let pred_adversarial = model.predict_row(&adv_num, &adv_cat)?;
    let success = pred_adversarial != pred_original;

    let original_raw = prep.inverse_row(&original.num, &original.cat)?;
    let adversarial_raw = prep.inverse_row(&adv_num, &adv_cat)?;

    let width = prep.numeric.len() + prep.categorical.len();
    let mut changed_mask = vec![false; width];
    for stat in &prep.numeric {
        let a = original_raw[stat.column].as_num().unwrap_or(0.0);
        let b = adversarial_raw[stat.column].as_num().unwrap_or(0.0);
        changed_mask[stat.column] = (a - b).abs() > numeric_change_tol;
    }
    for map in &prep.categorical {
        let a = &original_raw[map.column];
        let b = &adversarial_raw[map.column];
        changed_mask[map.column] = match (a, b) {
            (RawValue::Cat(x), RawValue::Cat(y)) => x != y,
            _ => true,
        };
    }

    let spec = model.spec();
    let orig_continuous = spec.encode_row(&original.num, &original.cat)?;
    let l1_encoded = orig_continuous
        .iter()
        .zip(adv_continuous)
        .map(|(a, b)| (a - b).abs())
        .sum();

    let l2_delta = delta
        .as_ref()
        .map(|d| d.iter().map(|v| v * v).sum::<f64>().sqrt());

    Ok(AttackOutcome {
        index,
        true_label,
        pred_original,
        pred_adversarial,
        success,
        original: original.clone(),
        adversarial: EncodedRow {
            num: adv_num,
            cat: adv_cat,
        },
        adversarial_raw,
        delta,
        iterations,
        l2_delta,
        changed_mask,
        l1_encoded,
        latent_adv,
        note,
    })
}

/// Check that a VAE and a target model agree on the data layout.
pub(crate) fn check_vae_model(vae: &VaeModel, model: &TargetModel) -> Result<()> {
    let spec = model.spec();
    if vae.num_dim != spec.num_dim
        || vae.cardinalities != spec.cat_cardinalities
        || vae.class_count != spec.class_count
    {
        return Err(Error::Config(
            "VAE and target model disagree on the data schema".into(),
        ));
    }
    Ok(())
}

/// Run the configured attack on one sample. Latent attacks need `vae`; for
/// input-space attacks a provided VAE is used to attach `latent_adv` (the
/// encoding of the final adversarial row) for outlier-rate reporting.
pub fn attack_sample(
    vae: Option<&VaeModel>,
    model: &TargetModel,
    prep: &Preprocessor,
    index: usize,
    row: &EncodedRow,
    y: usize,
    config: &AttackConfig,
) -> Result<AttackOutcome> {
    config.validate()?;
    let mut outcome = match config.kind {
        AttackKind::Fgsm => fgsm(model, prep, index, row, y, config)?,
        AttackKind::Pgd => pgd(model, prep, index, row, y, config)?,
        AttackKind::LatentCw => {
            let vae = require_vae(vae)?;
            latent_cw(vae, model, prep, index, row, y, config)?
        }
        AttackKind::PgdVae => {
            let vae = require_vae(vae)?;
            pgd_vae(vae, model, prep, index, row, y, config)?
        }
        AttackKind::DeltaZ => {
            let vae = require_vae(vae)?;
            deltaz(vae, model, prep, index, row, y, config)?
        }
        AttackKind::LatentCwL0 => {
            let vae = require_vae(vae)?;
            latent_cw_sparse(
                vae,
                model,
                prep,
                index,
                row,
                y,
                config,
                SparsePenalty::L0Sigmoid,
            )?
        }
        AttackKind::LatentCwL1 => {
            let vae = require_vae(vae)?;
            latent_cw_sparse(vae, model, prep, index, row, y, config, SparsePenalty::L1)?
        }
        AttackKind::LatentCwGreedy => {
            let vae = require_vae(vae)?;
            let base = latent_cw(vae, model, prep, index, row, y, config)?;
            greedy_sparsify(vae, model, prep, &base)?
        }
    };
    if outcome.latent_adv.is_none() {
        if let Some(vae) = vae {
            let num = Tensor::new(
                vec![1, outcome.adversarial.num.len()],
                outcome.adversarial.num.clone(),
            )?;
            let mu = vae.encode_mu(&num, std::slice::from_ref(&outcome.adversarial.cat))?;
            outcome.latent_adv = Some(mu.data().to_vec());
        }
    }
    Ok(outcome)
}

fn require_vae(vae: Option<&VaeModel>) -> Result<&VaeModel> {
    vae.ok_or_else(|| Error::Config("this attack needs a trained VAE".into()))
}

/// Serialise outcomes as JSON-lines.
pub fn write_outcomes(outcomes: &[AttackOutcome], w: &mut impl std::io::Write) -> Result<()> {
    for o in outcomes {
        serde_json::to_writer(&mut *w, o)?;
        writeln!(w)?;
    }
    Ok(())
}

/// Parse a JSON-lines outcome dump.
pub fn read_outcomes(r: impl std::io::BufRead) -> Result<Vec<AttackOutcome>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod config_tests {
    use super::*;

    #[test]
    fn latent_cw_defaults_match_the_standard_setting() {
        let cfg = AttackConfig::new(AttackKind::LatentCw);
        assert_eq!(cfg.iterations, 300);
        assert_eq!(cfg.learning_rate, 0.1);
        assert_eq!(cfg.lambda, 1.0);
        assert_eq!(cfg.kappa, 0.0);
        assert_eq!(cfg.tau, 1e-5);
        cfg.validate().unwrap();
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = AttackConfig::new(AttackKind::Pgd);
        cfg.epsilon = -0.1;
        assert!(cfg.validate().is_err());
        let mut cfg = AttackConfig::new(AttackKind::LatentCw);
        cfg.tau = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = AttackConfig::new(AttackKind::LatentCw);
        cfg.iterations = 0;
        assert!(cfg.validate().is_err());
    }
}
