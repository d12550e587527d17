//! Mixed-input variational autoencoder with a latent classification head.
//!
//! Categorical columns pass through learned embeddings, numerics through a
//! dense branch; the shared encoder stack (dense, batch norm, ReLU) projects
//! to Gaussian latent parameters. Twin decoders reconstruct per-column
//! category logits and numeric values, and a linear head classifies directly
//! in latent space. Training minimises
//! `‖x_num − x̃_num‖² + Σ_j CE(cat_j) + kl_weight·KL + cls_weight·CE(h(z), y)`.

mod stats;
mod train;

pub use stats::{fit_latent_stats, LatentStats};
pub use train::{latent_classifier_accuracy, train_vae, VaeEpochStats, VaeHistory};

use crate::checkpoint::{Container, Header};
use crate::data::{EncodedDataset, Preprocessor, RawRow};
use crate::error::{Error, Result};
use crate::models::argmax;
use crate::numerics::{kl_gaussian, BatchMoments, Tape, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;
const LOG_VAR_CLAMP: f64 = 10.0;

/// Training and architecture hyperparameters.
///
/// The composite loss is conventionally written with overloaded Greek
/// letters, so the config names the weights by role: `kl_weight` is the KL
/// coefficient and `cls_weight` the classification coefficient.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VaeConfig {
    pub encode_widths: Vec<usize>,
    pub latent_dim: usize,
    pub epochs: usize,
    /// KL coefficient (also accepted as `beta` in config files).
    #[serde(alias = "beta")]
    pub kl_weight: f64,
    /// Classification coefficient (also accepted as `alpha`).
    #[serde(alias = "alpha")]
    pub cls_weight: f64,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            encode_widths: vec![64, 32],
            latent_dim: 8,
            epochs: 100,
            kl_weight: 1e-2,
            cls_weight: 1.0,
            lr: 1e-2,
            batch: 512,
            seed: 0,
        }
    }
}

/// Embedding width for a categorical column of the given cardinality.
pub fn embed_dim(cardinality: usize) -> usize {
    (cardinality / 2 + 1 + usize::from(cardinality % 2 == 1)).min(16)
}

#[derive(Debug, Clone)]
struct Dense {
    w: Tensor,
    b: Tensor,
}

impl Dense {
    fn new<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let scale = (2.0 / fan_in as f64).sqrt();
        Self {
            w: Tensor::randn(vec![fan_in, fan_out], scale, rng).with_grad(),
            b: Tensor::zeros(vec![1, fan_out]).with_grad(),
        }
    }
}

#[derive(Debug, Clone)]
struct BatchNorm {
    gamma: Tensor,
    beta: Tensor,
    running_mean: Vec<f64>,
    running_var: Vec<f64>,
}

impl BatchNorm {
    fn new(width: usize) -> Self {
        Self {
            gamma: Tensor::full(vec![1, width], 1.0).unwrap().with_grad(),
            beta: Tensor::zeros(vec![1, width]).with_grad(),
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
        }
    }

    fn absorb(&mut self, moments: &BatchMoments) {
        for (r, &m) in self.running_mean.iter_mut().zip(&moments.mean) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m;
        }
        for (r, &v) in self.running_var.iter_mut().zip(&moments.var) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v;
        }
    }
}

/// Whether a forward pass uses batch statistics (training) or running
/// averages (inference).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    Train,
    Eval,
}

/// The mixed-input VAE: embeddings, encoder stack, latent heads, decoder
/// stack, per-column categorical heads, numeric head, latent classifier.
#[derive(Debug, Clone)]
pub struct VaeModel {
    pub num_dim: usize,
    pub cardinalities: Vec<usize>,
    pub class_count: usize,
    pub config: VaeConfig,
    embeddings: Vec<Tensor>,
    num_branch: Dense,
    encoder: Vec<Dense>,
    encoder_bn: Vec<BatchNorm>,
    mu_head: Dense,
    log_var_head: Dense,
    decoder: Vec<Dense>,
    cat_heads: Vec<Dense>,
    num_head: Dense,
    cls_head: Dense,
}

/// Tape bindings for every trainable parameter, in canonical order.
pub struct VaeVars {
    pub all: Vec<Var>,
    embeddings: Vec<Var>,
    num_branch: (Var, Var),
    encoder: Vec<(Var, Var)>,
    encoder_bn: Vec<(Var, Var)>,
    mu_head: (Var, Var),
    log_var_head: (Var, Var),
    decoder: Vec<(Var, Var)>,
    cat_heads: Vec<(Var, Var)>,
    num_head: (Var, Var),
    cls_head: (Var, Var),
}

/// Scalar values of the four loss components of one batch.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub recon_num: f64,
    pub recon_cat: f64,
    pub kl: f64,
    pub cls: f64,
}

impl VaeModel {
    pub fn new(
        num_dim: usize,
        cardinalities: Vec<usize>,
        class_count: usize,
        config: VaeConfig,
    ) -> Result<Self> {
        if config.latent_dim == 0 {
            return Err(Error::Config("latent_dim must be at least 1".into()));
        }
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(config.seed);

        let embeddings: Vec<Tensor> = cardinalities
            .iter()
            .map(|&card| Tensor::randn(vec![card, embed_dim(card)], 0.1, &mut rng).with_grad())
            .collect();
        let embed_total: usize = cardinalities.iter().map(|&c| embed_dim(c)).sum();
        let num_branch = Dense::new(num_dim.max(1), num_dim.max(1), &mut rng);
        let num_branch_out = if num_dim > 0 { num_dim } else { 0 };

        let mut encoder = Vec::new();
        let mut encoder_bn = Vec::new();
        let mut width = embed_total + num_branch_out;
        if width == 0 {
            return Err(Error::Config(
                "model needs at least one input column".into(),
            ));
        }
        for &w in &config.encode_widths {
            encoder.push(Dense::new(width, w, &mut rng));
            encoder_bn.push(BatchNorm::new(w));
            width = w;
        }
        let k = config.latent_dim;
        let mu_head = Dense::new(width, k, &mut rng);
        let log_var_head = Dense::new(width, k, &mut rng);

        let mut decoder = Vec::new();
        let mut dwidth = k;
        for &w in config.encode_widths.iter().rev() {
            decoder.push(Dense::new(dwidth, w, &mut rng));
            dwidth = w;
        }
        let cat_heads = cardinalities
            .iter()
            .map(|&card| Dense::new(dwidth, card, &mut rng))
            .collect();
        let num_head = Dense::new(dwidth, num_dim.max(1), &mut rng);
        let cls_head = Dense::new(k, class_count, &mut rng);

        Ok(Self {
            num_dim,
            cardinalities,
            class_count,
            config,
            embeddings,
            num_branch,
            encoder,
            encoder_bn,
            mu_head,
            log_var_head,
            decoder,
            cat_heads,
            num_head,
            cls_head,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    /// Trainable parameters in canonical order (running BN statistics are
    /// state, not parameters).
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = Vec::new();
        out.extend(self.embeddings.iter());
        out.push(&self.num_branch.w);
        out.push(&self.num_branch.b);
        for (layer, bn) in self.encoder.iter().zip(&self.encoder_bn) {
            out.push(&layer.w);
            out.push(&layer.b);
            out.push(&bn.gamma);
            out.push(&bn.beta);
        }
        out.push(&self.mu_head.w);
        out.push(&self.mu_head.b);
        out.push(&self.log_var_head.w);
        out.push(&self.log_var_head.b);
        for layer in &self.decoder {
            out.push(&layer.w);
            out.push(&layer.b);
        }
        for head in &self.cat_heads {
            out.push(&head.w);
            out.push(&head.b);
        }
        out.push(&self.num_head.w);
        out.push(&self.num_head.b);
        out.push(&self.cls_head.w);
        out.push(&self.cls_head.b);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        out.extend(self.embeddings.iter_mut());
        out.push(&mut self.num_branch.w);
        out.push(&mut self.num_branch.b);
        for (layer, bn) in self.encoder.iter_mut().zip(self.encoder_bn.iter_mut()) {
            out.push(&mut layer.w);
            out.push(&mut layer.b);
            out.push(&mut bn.gamma);
            out.push(&mut bn.beta);
        }
        out.push(&mut self.mu_head.w);
        out.push(&mut self.mu_head.b);
        out.push(&mut self.log_var_head.w);
        out.push(&mut self.log_var_head.b);
        for layer in &mut self.decoder {
            out.push(&mut layer.w);
            out.push(&mut layer.b);
        }
        for head in &mut self.cat_heads {
            out.push(&mut head.w);
            out.push(&mut head.b);
        }
        out.push(&mut self.num_head.w);
        out.push(&mut self.num_head.b);
        out.push(&mut self.cls_head.w);
        out.push(&mut self.cls_head.b);
        out
    }

    /// Bind every parameter to the tape, preserving canonical order in `all`.
    pub fn bind(&self, tape: &mut Tape) -> Result<VaeVars> {
        self.bind_impl(tape, false)
    }

    /// Bind parameters as constants: forward-only use inside attack loops,
    /// where only the perturbation requires gradients.
    pub fn bind_frozen(&self, tape: &mut Tape) -> Result<VaeVars> {
        self.bind_impl(tape, true)
    }

    fn bind_impl(&self, tape: &mut Tape, frozen: bool) -> Result<VaeVars> {
        let mut all = Vec::new();
        let push = |tape: &mut Tape, t: &Tensor, all: &mut Vec<Var>| -> Result<Var> {
            let v = if frozen {
                tape.constant(t)?
            } else {
                tape.leaf(t)?
            };
            all.push(v);
            Ok(v)
        };
        let embeddings: Vec<Var> = self
            .embeddings
            .iter()
            .map(|t| push(tape, t, &mut all))
            .collect::<Result<_>>()?;
        let num_branch = (
            push(tape, &self.num_branch.w, &mut all)?,
            push(tape, &self.num_branch.b, &mut all)?,
        );
        let mut encoder = Vec::new();
        let mut encoder_bn = Vec::new();
        for (layer, bn) in self.encoder.iter().zip(&self.encoder_bn) {
            encoder.push((
                push(tape, &layer.w, &mut all)?,
                push(tape, &layer.b, &mut all)?,
            ));
            encoder_bn.push((
                push(tape, &bn.gamma, &mut all)?,
                push(tape, &bn.beta, &mut all)?,
            ));
        }
        let mu_head = (
            push(tape, &self.mu_head.w, &mut all)?,
            push(tape, &self.mu_head.b, &mut all)?,
        );
        let log_var_head = (
            push(tape, &self.log_var_head.w, &mut all)?,
            push(tape, &self.log_var_head.b, &mut all)?,
        );
        let mut decoder = Vec::new();
        for layer in &self.decoder {
            decoder.push((
                push(tape, &layer.w, &mut all)?,
                push(tape, &layer.b, &mut all)?,
            ));
        }
        let mut cat_heads = Vec::new();
        for head in &self.cat_heads {
            cat_heads.push((
                push(tape, &head.w, &mut all)?,
                push(tape, &head.b, &mut all)?,
            ));
        }
        let num_head = (
            push(tape, &self.num_head.w, &mut all)?,
            push(tape, &self.num_head.b, &mut all)?,
        );
        let cls_head = (
            push(tape, &self.cls_head.w, &mut all)?,
            push(tape, &self.cls_head.b, &mut all)?,
        );
        Ok(VaeVars {
            all,
            embeddings,
            num_branch,
            encoder,
            encoder_bn,
            mu_head,
            log_var_head,
            decoder,
            cat_heads,
            num_head,
            cls_head,
        })
    }

    /// Per-column code vectors for a batch of categorical rows.
    fn column_codes(&self, cat: &[Vec<usize>]) -> Result<Vec<Vec<usize>>> {
        let m = self.cardinalities.len();
        let mut cols = vec![Vec::with_capacity(cat.len()); m];
        for row in cat {
            if row.len() != m {
                return Err(Error::Shape(format!(
                    "expected {m} categorical codes, got {}",
                    row.len()
                )));
            }
            for (j, &code) in row.iter().enumerate() {
                cols[j].push(code);
            }
        }
        Ok(cols)
    }

    /// Encoder forward to `(mu, log_var)`, recording batch moments when in
    /// training mode so the caller can update running statistics.
    pub fn encode_on_tape(
        &self,
        tape: &mut Tape,
        vars: &VaeVars,
        num: Var,
        cat: &[Vec<usize>],
        mode: ForwardMode,
    ) -> Result<(Var, Var, Vec<BatchMoments>)> {
        let cols = self.column_codes(cat)?;
        let mut parts = Vec::new();
        for (j, codes) in cols.iter().enumerate() {
            parts.push(tape.gather_rows(vars.embeddings[j], codes)?);
        }
        if self.num_dim > 0 {
            let lin = tape.matmul(num, vars.num_branch.0)?;
            let biased = tape.add_row(lin, vars.num_branch.1)?;
            parts.push(tape.relu(biased)?);
        }
        let mut h = tape.concat_cols(&parts)?;
        let mut moments = Vec::new();
        for (i, ((w, b), (gamma, beta))) in vars.encoder.iter().zip(&vars.encoder_bn).enumerate() {
            let lin = tape.matmul(h, *w)?;
            let biased = tape.add_row(lin, *b)?;
            let normed = match mode {
                ForwardMode::Train => {
                    let (y, m) = tape.batchnorm_train(biased, *gamma, *beta, BN_EPS)?;
                    moments.push(m);
                    y
                }
                ForwardMode::Eval => {
                    let bn = &self.encoder_bn[i];
                    let width = bn.running_mean.len();
                    let scale: Vec<f64> = bn
                        .gamma
                        .data()
                        .iter()
                        .zip(&bn.running_var)
                        .map(|(&g, &v)| g / (v + BN_EPS).sqrt())
                        .collect();
                    let shift: Vec<f64> = bn
                        .beta
                        .data()
                        .iter()
                        .zip(&bn.running_mean)
                        .zip(&scale)
                        .map(|((&b, &m), &s)| b - m * s)
                        .collect();
                    let scale_v = tape.constant(&Tensor::new(vec![1, width], scale)?)?;
                    let shift_v = tape.constant(&Tensor::new(vec![1, width], shift)?)?;
                    let scaled = tape.mul_row(biased, scale_v)?;
                    tape.add_row(scaled, shift_v)?
                }
            };
            h = tape.relu(normed)?;
        }
        let mu_lin = tape.matmul(h, vars.mu_head.0)?;
        let mu = tape.add_row(mu_lin, vars.mu_head.1)?;
        let lv_lin = tape.matmul(h, vars.log_var_head.0)?;
        let lv_biased = tape.add_row(lv_lin, vars.log_var_head.1)?;
        let log_var = tape.clamp(lv_biased, -LOG_VAR_CLAMP, LOG_VAR_CLAMP)?;
        Ok((mu, log_var, moments))
    }

    /// `z = mu + exp(log_var/2) ⊙ eps`, differentiable w.r.t. both heads.
    pub fn reparameterize(
        &self,
        tape: &mut Tape,
        mu: Var,
        log_var: Var,
        eps: &Tensor,
    ) -> Result<Var> {
        let half_lv = tape.scale(log_var, 0.5)?;
        let sigma = tape.exp(half_lv)?;
        let eps_v = tape.constant(eps)?;
        let scaled = tape.mul(sigma, eps_v)?;
        tape.add(mu, scaled)
    }

    /// Decoder forward: per-column categorical logits and numeric outputs.
    pub fn decode_on_tape(
        &self,
        tape: &mut Tape,
        vars: &VaeVars,
        z: Var,
    ) -> Result<(Vec<Var>, Var)> {
        let mut h = z;
        for (w, b) in &vars.decoder {
            let lin = tape.matmul(h, *w)?;
            let biased = tape.add_row(lin, *b)?;
            h = tape.relu(biased)?;
        }
        let mut cat_logits = Vec::with_capacity(vars.cat_heads.len());
        for (w, b) in &vars.cat_heads {
            let lin = tape.matmul(h, *w)?;
            cat_logits.push(tape.add_row(lin, *b)?);
        }
        let num_lin = tape.matmul(h, vars.num_head.0)?;
        let num_out = tape.add_row(num_lin, vars.num_head.1)?;
        Ok((cat_logits, num_out))
    }

    /// Latent classification head `R^k → R^c`.
    pub fn classify_on_tape(&self, tape: &mut Tape, vars: &VaeVars, z: Var) -> Result<Var> {
        let lin = tape.matmul(z, vars.cls_head.0)?;
        tape.add_row(lin, vars.cls_head.1)
    }

    /// Composite loss of one encoded batch. The classification and KL terms
    /// are skipped outright when their weights are zero, so an ablated total
    /// equals the remaining parts exactly.
    #[allow(clippy::too_many_arguments)]
    pub fn loss_on_tape(
        &self,
        tape: &mut Tape,
        vars: &VaeVars,
        batch: &EncodedDataset,
        eps: &Tensor,
        mode: ForwardMode,
    ) -> Result<(Var, LossParts, Vec<BatchMoments>)> {
        let n = batch.len();
        let num = tape.constant(&batch.num)?;
        let (mu, log_var, moments) = self.encode_on_tape(tape, vars, num, &batch.cat, mode)?;
        let z = self.reparameterize(tape, mu, log_var, eps)?;
        let (cat_logits, num_out) = self.decode_on_tape(tape, vars, z)?;

        // Numeric reconstruction: mean over the batch of ‖x − x̃‖².
        let recon_num = if self.num_dim > 0 {
            let diff = tape.sub(num_out, num)?;
            let sq = tape.square(diff)?;
            let total = tape.sum(sq)?;
            tape.scale(total, 1.0 / n as f64)?
        } else {
            tape.constant(&Tensor::scalar(0.0)?)?
        };

        // Categorical reconstruction: cross-entropy summed over columns.
        let cols = self.column_codes(&batch.cat)?;
        let mut recon_cat: Option<Var> = None;
        for (j, logits) in cat_logits.iter().enumerate() {
            let ce = tape.softmax_cross_entropy(*logits, &cols[j])?;
            recon_cat = Some(match recon_cat {
                Some(acc) => tape.add(acc, ce)?,
                None => ce,
            });
        }
        let recon_cat = match recon_cat {
            Some(v) => v,
            None => tape.constant(&Tensor::scalar(0.0)?)?,
        };

        let kl = kl_gaussian(tape, mu, log_var)?;
        let cls_logits = self.classify_on_tape(tape, vars, z)?;
        let cls = tape.softmax_cross_entropy(cls_logits, &batch.y)?;

        let mut total = tape.add(recon_num, recon_cat)?;
        if self.config.kl_weight != 0.0 {
            let weighted = tape.scale(kl, self.config.kl_weight)?;
            total = tape.add(total, weighted)?;
        }
        if self.config.cls_weight != 0.0 {
            let weighted = tape.scale(cls, self.config.cls_weight)?;
            total = tape.add(total, weighted)?;
        }

        let parts = LossParts {
            recon_num: tape.scalar_value(recon_num),
            recon_cat: tape.scalar_value(recon_cat),
            kl: tape.scalar_value(kl),
            cls: tape.scalar_value(cls),
        };
        Ok((total, parts, moments))
    }

    pub(crate) fn absorb_moments(&mut self, moments: &[BatchMoments]) {
        for (bn, m) in self.encoder_bn.iter_mut().zip(moments) {
            bn.absorb(m);
        }
    }

    /// Inference-mode encoder means `mu(x)` for a whole split, `n × k`.
    pub fn encode_mu(&self, num: &Tensor, cat: &[Vec<usize>]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape)?;
        let num_v = tape.constant(num)?;
        let (mu, _, _) = self.encode_on_tape(&mut tape, &vars, num_v, cat, ForwardMode::Eval)?;
        Tensor::new(
            vec![num.shape()[0], self.latent_dim()],
            tape.value(mu).to_vec(),
        )
    }

    /// Decode latent rows to (per-column categorical logits, numeric outputs)
    /// as plain tensors.
    pub fn decode(&self, z: &Tensor) -> Result<(Vec<Tensor>, Tensor)> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape)?;
        let zv = tape.constant(z)?;
        let (cat_logits, num_out) = self.decode_on_tape(&mut tape, &vars, zv)?;
        let n = z.shape()[0];
        let cats = cat_logits
            .into_iter()
            .zip(&self.cardinalities)
            .map(|(v, &card)| Tensor::new(vec![n, card], tape.value(v).to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let nums = Tensor::new(vec![n, self.num_dim.max(1)], tape.value(num_out).to_vec())?;
        Ok((cats, nums))
    }

    /// Latent-classifier logits for latent rows.
    pub fn classify_latent(&self, z: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape)?;
        let zv = tape.constant(z)?;
        let logits = self.classify_on_tape(&mut tape, &vars, zv)?;
        Tensor::new(
            vec![z.shape()[0], self.class_count],
            tape.value(logits).to_vec(),
        )
    }

    /// Deterministic reconstruction of encoded rows: encode with `eps = 0`
    /// (the latent mean), decode, argmax categoricals. Returns the
    /// reconstruction in encoded space (z-scored numerics + codes).
    pub fn reconstruct_encoded(&self, data: &EncodedDataset) -> Result<(Tensor, Vec<Vec<usize>>)> {
        let mu = self.encode_mu(&data.num, &data.cat)?;
        let (cat_logits, num_out) = self.decode(&mu)?;
        let n = data.len();
        let mut codes = vec![Vec::with_capacity(self.cardinalities.len()); n];
        for logits in &cat_logits {
            let card = logits.shape()[1];
            for (i, row) in logits.data().chunks(card).enumerate() {
                codes[i].push(argmax(row));
            }
        }
        let num = if self.num_dim > 0 {
            num_out
        } else {
            Tensor::zeros(vec![n, 0])
        };
        Ok((num, codes))
    }

    /// Full reconstruction back to raw rows via the preprocessor.
    pub fn reconstruct(&self, data: &EncodedDataset, prep: &Preprocessor) -> Result<Vec<RawRow>> {
        let (num, codes) = self.reconstruct_encoded(data)?;
        (0..data.len())
            .map(|i| prep.inverse_row(&num.row(i), &codes[i]))
            .collect()
    }

    pub fn named_params(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (j, e) in self.embeddings.iter().enumerate() {
            out.push((format!("embed{j}"), e.clone()));
        }
        out.push(("num_branch.w".into(), self.num_branch.w.clone()));
        out.push(("num_branch.b".into(), self.num_branch.b.clone()));
        for (i, (layer, bn)) in self.encoder.iter().zip(&self.encoder_bn).enumerate() {
            out.push((format!("enc{i}.w"), layer.w.clone()));
            out.push((format!("enc{i}.b"), layer.b.clone()));
            out.push((format!("enc{i}.bn.gamma"), bn.gamma.clone()));
            out.push((format!("enc{i}.bn.beta"), bn.beta.clone()));
            out.push((
                format!("enc{i}.bn.running_mean"),
                Tensor::new(vec![bn.running_mean.len()], bn.running_mean.clone()).unwrap(),
            ));
            out.push((
                format!("enc{i}.bn.running_var"),
                Tensor::new(vec![bn.running_var.len()], bn.running_var.clone()).unwrap(),
            ));
        }
        out.push(("mu.w".into(), self.mu_head.w.clone()));
        out.push(("mu.b".into(), self.mu_head.b.clone()));
        out.push(("log_var.w".into(), self.log_var_head.w.clone()));
        out.push(("log_var.b".into(), self.log_var_head.b.clone()));
        for (i, layer) in self.decoder.iter().enumerate() {
            out.push((format!("dec{i}.w"), layer.w.clone()));
            out.push((format!("dec{i}.b"), layer.b.clone()));
        }
        for (j, head) in self.cat_heads.iter().enumerate() {
            out.push((format!("cat{j}.w"), head.w.clone()));
            out.push((format!("cat{j}.b"), head.b.clone()));
        }
        out.push(("num_head.w".into(), self.num_head.w.clone()));
        out.push(("num_head.b".into(), self.num_head.b.clone()));
        out.push(("cls.w".into(), self.cls_head.w.clone()));
        out.push(("cls.b".into(), self.cls_head.b.clone()));
        out
    }

    /// Serialise into the shared checkpoint container, optionally with latent
    /// statistics.
    pub fn to_container(
        &self,
        stats: Option<&LatentStats>,
        metadata: serde_json::Value,
    ) -> Result<Container> {
        let mut tensors = self.named_params();
        if let Some(s) = stats {
            tensors.extend(s.as_tensors()?);
        }
        Ok(Container {
            header: Header {
                kind: "vae".into(),
                arch: serde_json::json!({
                    "num_dim": self.num_dim,
                    "cardinalities": self.cardinalities,
                    "class_count": self.class_count,
                    "config": self.config,
                }),
                metadata,
            },
            tensors,
        })
    }

    pub fn from_container(container: &Container) -> Result<Self> {
        if container.header.kind != "vae" {
            return Err(Error::Checkpoint(format!(
                "`{}` is not a VAE checkpoint",
                container.header.kind
            )));
        }
        let arch = &container.header.arch;
        let num_dim: usize = serde_json::from_value(arch["num_dim"].clone())?;
        let cardinalities: Vec<usize> = serde_json::from_value(arch["cardinalities"].clone())?;
        let class_count: usize = serde_json::from_value(arch["class_count"].clone())?;
        let config: VaeConfig = serde_json::from_value(arch["config"].clone())?;
        let mut model = Self::new(num_dim, cardinalities, class_count, config)?;
        let grab =
            |name: &str| -> Result<Tensor> { Ok(container.tensor(name)?.clone().with_grad()) };
        for (j, e) in model.embeddings.iter_mut().enumerate() {
            *e = grab(&format!("embed{j}"))?;
        }
        model.num_branch.w = grab("num_branch.w")?;
        model.num_branch.b = grab("num_branch.b")?;
        for i in 0..model.encoder.len() {
            model.encoder[i].w = grab(&format!("enc{i}.w"))?;
            model.encoder[i].b = grab(&format!("enc{i}.b"))?;
            model.encoder_bn[i].gamma = grab(&format!("enc{i}.bn.gamma"))?;
            model.encoder_bn[i].beta = grab(&format!("enc{i}.bn.beta"))?;
            model.encoder_bn[i].running_mean = container
                .tensor(&format!("enc{i}.bn.running_mean"))?
                .data()
                .to_vec();
            model.encoder_bn[i].running_var = container
                .tensor(&format!("enc{i}.bn.running_var"))?
                .data()
                .to_vec();
        }
        model.mu_head.w = grab("mu.w")?;
        model.mu_head.b = grab("mu.b")?;
        model.log_var_head.w = grab("log_var.w")?;
        model.log_var_head.b = grab("log_var.b")?;
        for i in 0..model.decoder.len() {
            model.decoder[i].w = grab(&format!("dec{i}.w"))?;
            model.decoder[i].b = grab(&format!("dec{i}.b"))?;
        }
        for j in 0..model.cat_heads.len() {
            model.cat_heads[j].w = grab(&format!("cat{j}.w"))?;
            model.cat_heads[j].b = grab(&format!("cat{j}.b"))?;
        }
        model.num_head.w = grab("num_head.w")?;
        model.num_head.b = grab("num_head.b")?;
        model.cls_head.w = grab("cls.w")?;
        model.cls_head.b = grab("cls.b")?;
        Ok(model)
    }

    pub fn save(
        &self,
        path: &Path,
        stats: Option<&LatentStats>,
        metadata: serde_json::Value,
    ) -> Result<()> {
        self.to_container(stats, metadata)?.save(path)
    }

    pub fn load(path: &Path) -> Result<(Self, Option<LatentStats>)> {
        let container = Container::load(path)?;
        let model = Self::from_container(&container)?;
        let stats = LatentStats::from_container(&container)?;
        Ok((model, stats))
    }

    /// Test-support accessor: zero the latent classification head.
    pub fn zero_cls_head(&mut self) {
        let k = self.latent_dim();
        self.cls_head.w = Tensor::zeros(vec![k, self.class_count]).with_grad();
        self.cls_head.b = Tensor::zeros(vec![1, self.class_count]).with_grad();
    }
}
