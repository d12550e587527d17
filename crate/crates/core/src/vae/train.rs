//! Joint training of encoder, decoder, and latent classifier.

use crate::data::EncodedDataset;
use crate::error::{Error, Result};
use crate::models::argmax;
use crate::numerics::{adam_step, AdamConfig, AdamState, Tape, Tensor};
use crate::vae::{ForwardMode, VaeModel};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// One epoch of the training history, including the loss decomposition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VaeEpochStats {
    pub epoch: usize,
    pub total: f64,
    pub recon_num: f64,
    pub recon_cat: f64,
    pub kl: f64,
    pub cls: f64,
    pub val_acc: f64,
}

pub type VaeHistory = Vec<VaeEpochStats>;

/// Optimise all parameters jointly with Adam on the composite loss. `data` is
/// the training material (the experiment pipeline passes train + validation
/// concatenated); `val` only feeds the latent-classifier accuracy column of
/// the history.
pub fn train_vae(
    vae: &mut VaeModel,
    data: &EncodedDataset,
    val: Option<&EncodedDataset>,
    epochs_override: Option<usize>,
) -> Result<VaeHistory> {
    let epochs = epochs_override.unwrap_or(vae.config.epochs);
    let batch_size = vae.config.batch.max(1);
    let mut rng = ChaCha12Rng::seed_from_u64(vae.config.seed.wrapping_add(1));
    let mut adam = AdamState::for_params(&vae.params());
    let adam_cfg = AdamConfig::with_lr(vae.config.lr);
    let mut history = Vec::with_capacity(epochs);
    let k = vae.latent_dim();

    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0f64; 5];
        let mut batches = 0usize;
        for chunk in order.chunks(batch_size) {
            let batch = data.subset(chunk)?;
            let eps = Tensor::randn(vec![batch.len(), k], 1.0, &mut rng);
            let mut tape = Tape::new();
            let vars = vae.bind(&mut tape)?;
            let (total, parts, moments) = vae
                .loss_on_tape(&mut tape, &vars, &batch, &eps, ForwardMode::Train)
                .map_err(|e| match e {
                    Error::NonFinite { .. } => Error::Train {
                        epoch,
                        message: "loss became non-finite".into(),
                    },
                    other => other,
                })?;
            let total_value = tape.scalar_value(total);
            if !total_value.is_finite() {
                return Err(Error::Train {
                    epoch,
                    message: "loss became non-finite".into(),
                });
            }
            let grads = tape.backward(total)?;
            let grad_list: Vec<Vec<f64>> = vars.all.iter().map(|&v| grads.wrt(v)).collect();
            adam_step(&mut vae.params_mut(), &grad_list, &mut adam, &adam_cfg).map_err(|e| {
                Error::Train {
                    epoch,
                    message: e.to_string(),
                }
            })?;
            vae.absorb_moments(&moments);
            sums[0] += total_value;
            sums[1] += parts.recon_num;
            sums[2] += parts.recon_cat;
            sums[3] += parts.kl;
            sums[4] += parts.cls;
            batches += 1;
        }
        let b = batches.max(1) as f64;
        let val_acc = match val {
            Some(v) => latent_classifier_accuracy(vae, v)?,
            None => f64::NAN,
        };
        history.push(VaeEpochStats {
            epoch,
            total: sums[0] / b,
            recon_num: sums[1] / b,
            recon_cat: sums[2] / b,
            kl: sums[3] / b,
            cls: sums[4] / b,
            val_acc,
        });
    }
    Ok(history)
}

/// Accuracy of the latent classification head on encoder means.
pub fn latent_classifier_accuracy(vae: &VaeModel, data: &EncodedDataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(f64::NAN);
    }
    let mu = vae.encode_mu(&data.num, &data.cat)?;
    let logits = vae.classify_latent(&mu)?;
    let c = vae.class_count;
    let hits = logits
        .data()
        .chunks(c)
        .zip(&data.y)
        .filter(|(row, &y)| argmax(row) == y)
        .count();
    Ok(hits as f64 / data.len() as f64)
}
