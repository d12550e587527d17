//! Cross-entropy training for target models with Adam, seeded shuffling, and
//! best-validation checkpointing.

use crate::data::EncodedDataset;
use crate::error::{Error, Result};
use crate::models::{evaluate, TargetModel};
use crate::numerics::{adam_step, AdamConfig, AdamState, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    /// Early stop after this many epochs without a validation improvement.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 1e-3,
            batch: 128,
            seed: 0,
            patience: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub val_accuracy: f64,
}

pub type TrainHistory = Vec<EpochStats>;

/// Minimise cross-entropy with Adam; the parameters achieving the best
/// validation accuracy are restored at the end.
pub fn train_target(
    model: &mut TargetModel,
    train: &EncodedDataset,
    val: &EncodedDataset,
    config: &TrainConfig,
) -> Result<TrainHistory> {
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::for_params(&model.params());
    let adam_cfg = AdamConfig::with_lr(config.lr);
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, Vec<Tensor>)> = None;
    let mut stale = 0usize;

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch.max(1)) {
            let batch = train.subset(chunk)?;
            let (loss_value, grad_list) =
                batch_loss_and_grads(model, &batch).map_err(|e| match e {
                    Error::NonFinite { .. } => Error::Train {
                        epoch,
                        message: "loss became non-finite".into(),
                    },
                    other => other,
                })?;
            epoch_loss += loss_value;
            batches += 1;
            adam_step(&mut model.params_mut(), &grad_list, &mut adam, &adam_cfg).map_err(|e| {
                Error::Train {
                    epoch,
                    message: e.to_string(),
                }
            })?;
        }
        let val_accuracy = evaluate(model, val)?.accuracy;
        history.push(EpochStats {
            epoch,
            loss: epoch_loss / batches.max(1) as f64,
            val_accuracy,
        });
        let improved = best.as_ref().is_none_or(|(acc, _)| val_accuracy > *acc);
        if improved {
            best = Some((val_accuracy, model.params().into_iter().cloned().collect()));
            stale = 0;
        } else {
            stale += 1;
            if stale > config.patience {
                break;
            }
        }
    }
    if let Some((_, params)) = best {
        for (slot, saved) in model.params_mut().into_iter().zip(params) {
            *slot = saved;
        }
    }
    Ok(history)
}

/// One forward/backward pass over a batch, returning the loss and gradients
/// aligned with `model.params()` order.
fn batch_loss_and_grads(
    model: &TargetModel,
    batch: &EncodedDataset,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut tape = Tape::new();
    let param_vars: Vec<_> = model
        .params()
        .into_iter()
        .map(|t| tape.leaf(t))
        .collect::<Result<_>>()?;
    let logits = forward_with_bound_params(model, &mut tape, &param_vars, batch)?;
    let loss = tape.softmax_cross_entropy(logits, &batch.y)?;
    let loss_value = tape.scalar_value(loss);
    let grads = tape.backward(loss)?;
    Ok((
        loss_value,
        param_vars.into_iter().map(|v| grads.wrt(v)).collect(),
    ))
}

/// Forward pass that reuses already-bound parameter vars instead of binding
/// fresh leaves, so gradients can be read back per parameter.
fn forward_with_bound_params(
    model: &TargetModel,
    tape: &mut Tape,
    params: &[crate::numerics::Var],
    batch: &EncodedDataset,
) -> Result<crate::numerics::Var> {
    use crate::numerics::Var;
    let spec = model.spec();
    let n = batch.len();
    let mut data = Vec::with_capacity(n * spec.input_width());
    for i in 0..n {
        data.extend(spec.encode_row(&batch.num.row(i), &batch.cat[i])?);
    }
    let x = tape.constant(&Tensor::new(vec![n, spec.input_width()], data)?)?;
    match model {
        TargetModel::Mlp(m) => {
            let layers = m.weights.len();
            let (ws, bs): (&[Var], &[Var]) = (&params[..layers], &params[layers..]);
            let mut h = x;
            for i in 0..layers {
                let lin = tape.matmul(h, ws[i])?;
                h = tape.add_row(lin, bs[i])?;
                if i + 1 < layers {
                    h = tape.relu(h)?;
                }
            }
            Ok(h)
        }
        TargetModel::Sdt(m) => {
            let (w, b, leaves) = (params[0], params[1], params[2]);
            let lin = tape.matmul(x, w)?;
            let routed = tape.add_row(lin, b)?;
            let gate = tape.sigmoid(routed)?;
            let ones = tape.constant(&Tensor::full(vec![n, 1], 1.0)?)?;
            let mut paths = vec![ones];
            for level in 0..m.depth {
                let level_offset = (1 << level) - 1;
                let mut next = Vec::with_capacity(paths.len() * 2);
                for (pos, &path) in paths.iter().enumerate() {
                    let p_left = tape.slice_cols(gate, level_offset + pos, 1)?;
                    let left = tape.mul(path, p_left)?;
                    let neg = tape.scale(p_left, -1.0)?;
                    let p_right = tape.add_scalar(neg, 1.0)?;
                    let right = tape.mul(path, p_right)?;
                    next.push(left);
                    next.push(right);
                }
                paths = next;
            }
            let paths = tape.concat_cols(&paths)?;
            let dists = tape.softmax_rows(leaves)?;
            let mixture = tape.matmul(paths, dists)?;
            tape.log(mixture)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SplitTag;
    use crate::models::{InputSpec, MlpConfig, MlpModel};
    use rand::Rng;

    /// Linearly separable two-class blobs in 2-D with one nuisance categorical.
    fn blobs(n: usize, seed: u64) -> (EncodedDataset, EncodedDataset) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut make = |count: usize, tag: SplitTag| {
            let mut nums = Vec::new();
            let mut cats = Vec::new();
            let mut y = Vec::new();
            for _ in 0..count {
                let label = rng.random_range(0..2usize);
                let centre = if label == 0 { -2.0 } else { 2.0 };
                nums.push(vec![
                    centre + rng.random_range(-0.5..0.5),
                    centre + rng.random_range(-0.5..0.5),
                ]);
                cats.push(vec![rng.random_range(0..3usize)]);
                y.push(label);
            }
            EncodedDataset {
                num: Tensor::from_rows(&nums).unwrap(),
                cat: cats,
                y,
                split: tag,
            }
        };
        (make(n, SplitTag::Train), make(n / 4, SplitTag::Val))
    }

    fn spec() -> InputSpec {
        InputSpec {
            num_dim: 2,
            cat_cardinalities: vec![3],
            one_hot: true,
            class_count: 2,
        }
    }

    #[test]
    fn mlp_separates_blobs() {
        let (train, val) = blobs(200, 10);
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let mut model = TargetModel::Mlp(MlpModel::new(
            spec(),
            &MlpConfig { hidden: vec![16] },
            &mut rng,
        ));
        let cfg = TrainConfig {
            epochs: 50,
            lr: 1e-2,
            batch: 32,
            seed: 12,
            patience: 50,
        };
        train_target(&mut model, &train, &val, &cfg).unwrap();
        let acc = evaluate(&model, &val).unwrap().accuracy;
        assert!(acc >= 0.99, "val accuracy {acc}");
    }

    #[test]
    fn zero_epochs_leaves_model_at_initialisation() {
        let (train, val) = blobs(40, 20);
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let mut model = TargetModel::Mlp(MlpModel::new(spec(), &MlpConfig::default(), &mut rng));
        let before: Vec<Tensor> = model.params().into_iter().cloned().collect();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let history = train_target(&mut model, &train, &val, &cfg).unwrap();
        assert!(history.is_empty());
        for (a, b) in model.params().iter().zip(&before) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn fixed_seed_reproduces_parameters() {
        let (train, val) = blobs(60, 30);
        let run = || {
            let mut rng = ChaCha12Rng::seed_from_u64(31);
            let mut model = TargetModel::Mlp(MlpModel::new(
                spec(),
                &MlpConfig { hidden: vec![8] },
                &mut rng,
            ));
            let cfg = TrainConfig {
                epochs: 5,
                lr: 1e-2,
                batch: 16,
                seed: 32,
                patience: 10,
            };
            train_target(&mut model, &train, &val, &cfg).unwrap();
            model
                .params()
                .iter()
                .flat_map(|t| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn sdt_trains_above_chance() {
        let (train, val) = blobs(200, 40);
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        let mut model = TargetModel::Sdt(
            crate::models::SdtModel::new(spec(), &crate::models::SdtConfig { depth: 3 }, &mut rng)
                .unwrap(),
        );
        let cfg = TrainConfig {
            epochs: 40,
            lr: 5e-2,
            batch: 32,
            seed: 42,
            patience: 40,
        };
        train_target(&mut model, &train, &val, &cfg).unwrap();
        let acc = evaluate(&model, &val).unwrap().accuracy;
        assert!(acc >= 0.9, "val accuracy {acc}");
    }
}
