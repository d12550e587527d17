//! Target classifiers attacked by the framework: an MLP and a soft decision
//! tree, both consuming one-hot expanded categoricals concatenated with
//! z-scored numerics. That continuous representation is what input-space
//! attacks differentiate through.

mod mlp;
mod sdt;
mod train;

pub use mlp::{MlpConfig, MlpModel};
pub use sdt::{SdtConfig, SdtModel};
pub use train::{train_target, EpochStats, TrainConfig, TrainHistory};

use crate::checkpoint::{Container, Header};
use crate::data::EncodedDataset;
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Input contract of a target model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSpec {
    pub num_dim: usize,
    pub cat_cardinalities: Vec<usize>,
    /// Categorical handling flag; both shipped targets one-hot expand.
    pub one_hot: bool,
    pub class_count: usize,
}

impl InputSpec {
    pub fn from_encoded(data: &EncodedDataset, class_count: usize, cards: Vec<usize>) -> Self {
        Self {
            num_dim: data.num_dim(),
            cat_cardinalities: cards,
            one_hot: true,
            class_count,
        }
    }

    /// Width of the continuous representation: one-hot blocks (in categorical
    /// column order) followed by the numeric block.
    pub fn input_width(&self) -> usize {
        self.cat_cardinalities.iter().sum::<usize>() + self.num_dim
    }

    /// Column offset of categorical block `j`.
    pub fn cat_offset(&self, j: usize) -> usize {
        self.cat_cardinalities[..j].iter().sum()
    }

    /// Column offset of the numeric block.
    pub fn num_offset(&self) -> usize {
        self.cat_cardinalities.iter().sum()
    }

    /// Assemble one row of the continuous representation.
    pub fn encode_row(&self, num: &[f64], cat: &[usize]) -> Result<Vec<f64>> {
        if num.len() != self.num_dim || cat.len() != self.cat_cardinalities.len() {
            return Err(Error::Shape(format!(
                "encode_row: got {}/{} values for {}/{} columns",
                num.len(),
                cat.len(),
                self.num_dim,
                self.cat_cardinalities.len()
            )));
        }
        let mut row = vec![0.0; self.input_width()];
        for (j, (&code, &card)) in cat.iter().zip(&self.cat_cardinalities).enumerate() {
            if code >= card {
                return Err(Error::Index(format!(
                    "category code {code} out of range [0, {card}) in column {j}"
                )));
            }
            row[self.cat_offset(j) + code] = 1.0;
        }
        row[self.num_offset()..].copy_from_slice(num);
        Ok(row)
    }

    /// Discretise a continuous representation back to (numerics, codes) by
    /// per-column argmax over each one-hot block.
    pub fn discretise(&self, row: &[f64]) -> (Vec<f64>, Vec<usize>) {
        let mut codes = Vec::with_capacity(self.cat_cardinalities.len());
        for (j, &card) in self.cat_cardinalities.iter().enumerate() {
            let off = self.cat_offset(j);
            let block = &row[off..off + card];
            let mut best = 0;
            for (i, &v) in block.iter().enumerate() {
                if v > block[best] {
                    best = i;
                }
            }
            codes.push(best);
        }
        (row[self.num_offset()..].to_vec(), codes)
    }
}

/// A trained (or initialised) target classifier.
#[derive(Debug, Clone)]
pub enum TargetModel {
    Mlp(MlpModel),
    Sdt(SdtModel),
}

impl TargetModel {
    pub fn kind(&self) -> &'static str {
        match self {
            TargetModel::Mlp(_) => "mlp",
            TargetModel::Sdt(_) => "sdt",
        }
    }

    pub fn spec(&self) -> &InputSpec {
        match self {
            TargetModel::Mlp(m) => &m.spec,
            TargetModel::Sdt(m) => &m.spec,
        }
    }

    pub fn class_count(&self) -> usize {
        self.spec().class_count
    }

    /// Logits from a pre-assembled continuous input var `[n × input_width]`.
    /// This is the differentiable path shared by training, input-space
    /// attacks, and the decoder bridge of latent attacks.
    pub fn forward_continuous(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        match self {
            TargetModel::Mlp(m) => m.forward_continuous(tape, x),
            TargetModel::Sdt(m) => m.forward_continuous(tape, x),
        }
    }

    /// Forward with parameters bound as constants, so a backward pass only
    /// reaches the attacked input.
    pub fn forward_frozen(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        match self {
            TargetModel::Mlp(m) => m.forward_frozen(tape, x),
            TargetModel::Sdt(m) => m.forward_frozen(tape, x),
        }
    }

    /// Logits for a batch of encoded rows.
    pub fn forward_batch(&self, tape: &mut Tape, num: &Tensor, cat: &[Vec<usize>]) -> Result<Var> {
        let spec = self.spec();
        let n = num.shape()[0];
        if cat.len() != n {
            return Err(Error::Shape(format!(
                "forward_batch: {n} numeric rows but {} categorical rows",
                cat.len()
            )));
        }
        let mut data = Vec::with_capacity(n * spec.input_width());
        for (i, codes) in cat.iter().enumerate() {
            data.extend(spec.encode_row(&num.row(i), codes)?);
        }
        let x = tape.constant(&Tensor::new(vec![n, spec.input_width()], data)?)?;
        self.forward_continuous(tape, x)
    }

    /// Argmax class per row of an encoded split.
    pub fn predict(&self, data: &EncodedDataset) -> Result<Vec<usize>> {
        let mut tape = Tape::new();
        let logits = self.forward_batch(&mut tape, &data.num, &data.cat)?;
        let c = self.class_count();
        Ok(tape.value(logits).chunks(c).map(argmax).collect())
    }

    /// Argmax class of one encoded row.
    pub fn predict_row(&self, num: &[f64], cat: &[usize]) -> Result<usize> {
        let mut tape = Tape::new();
        let x = Tensor::new(
            vec![1, self.spec().input_width()],
            self.spec().encode_row(num, cat)?,
        )?;
        let xv = tape.constant(&x)?;
        let logits = self.forward_continuous(&mut tape, xv)?;
        Ok(argmax(tape.value(logits)))
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            TargetModel::Mlp(m) => m.params(),
            TargetModel::Sdt(m) => m.params(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            TargetModel::Mlp(m) => m.params_mut(),
            TargetModel::Sdt(m) => m.params_mut(),
        }
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        match self {
            TargetModel::Mlp(m) => m.named_params(),
            TargetModel::Sdt(m) => m.named_params(),
        }
    }

    pub fn to_container(&self, metadata: serde_json::Value) -> Result<Container> {
        let arch = match self {
            TargetModel::Mlp(m) => serde_json::json!({
                "spec": m.spec,
                "hidden": m.hidden,
            }),
            TargetModel::Sdt(m) => serde_json::json!({
                "spec": m.spec,
                "depth": m.depth,
            }),
        };
        Ok(Container {
            header: Header {
                kind: self.kind().into(),
                arch,
                metadata,
            },
            tensors: self
                .named_params()
                .into_iter()
                .map(|(n, t)| (n, t.clone()))
                .collect(),
        })
    }

    pub fn from_container(container: &Container) -> Result<Self> {
        let spec: InputSpec = serde_json::from_value(container.header.arch["spec"].clone())?;
        match container.header.kind.as_str() {
            "mlp" => {
                let hidden: Vec<usize> =
                    serde_json::from_value(container.header.arch["hidden"].clone())?;
                let layer_count = hidden.len() + 1;
                let mut weights = Vec::new();
                let mut biases = Vec::new();
                for i in 0..layer_count {
                    weights.push(
                        container
                            .tensor(&format!("layer{i}.w"))?
                            .clone()
                            .with_grad(),
                    );
                    biases.push(
                        container
                            .tensor(&format!("layer{i}.b"))?
                            .clone()
                            .with_grad(),
                    );
                }
                Ok(TargetModel::Mlp(MlpModel {
                    spec,
                    hidden,
                    weights,
                    biases,
                }))
            }
            "sdt" => {
                let depth: usize = serde_json::from_value(container.header.arch["depth"].clone())?;
                Ok(TargetModel::Sdt(SdtModel {
                    spec,
                    depth,
                    inner_w: container.tensor("inner.w")?.clone().with_grad(),
                    inner_b: container.tensor("inner.b")?.clone().with_grad(),
                    leaf_logits: container.tensor("leaf.logits")?.clone().with_grad(),
                }))
            }
            other => Err(Error::Checkpoint(format!(
                "`{other}` is not a target-model checkpoint"
            ))),
        }
    }

    pub fn save(&self, path: &Path, metadata: serde_json::Value) -> Result<()> {
        self.to_container(metadata)?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}

/// Accuracy plus a `c×c` confusion matrix (rows true, columns predicted).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
}

/// Fraction of rows whose argmax logit matches the label.
pub fn evaluate(model: &TargetModel, data: &EncodedDataset) -> Result<Evaluation> {
    let preds = model.predict(data)?;
    let c = model.class_count();
    let mut confusion = vec![vec![0usize; c]; c];
    let mut hits = 0usize;
    for (&p, &y) in preds.iter().zip(&data.y) {
        confusion[y][p] += 1;
        if p == y {
            hits += 1;
        }
    }
    Ok(Evaluation {
        accuracy: hits as f64 / data.len().max(1) as f64,
        confusion,
    })
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SplitTag;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn spec() -> InputSpec {
        InputSpec {
            num_dim: 2,
            cat_cardinalities: vec![3, 2],
            one_hot: true,
            class_count: 2,
        }
    }

    fn encoded(nums: Vec<Vec<f64>>, cats: Vec<Vec<usize>>, y: Vec<usize>) -> EncodedDataset {
        EncodedDataset {
            num: Tensor::from_rows(&nums).unwrap(),
            cat: cats,
            y,
            split: SplitTag::Test,
        }
    }

    #[test]
    fn input_layout_and_round_trip() {
        let s = spec();
        assert_eq!(s.input_width(), 7);
        let row = s.encode_row(&[0.5, -1.0], &[2, 0]).unwrap();
        assert_eq!(row, vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.5, -1.0]);
        let (num, cat) = s.discretise(&row);
        assert_eq!(num, vec![0.5, -1.0]);
        assert_eq!(cat, vec![2, 0]);
    }

    #[test]
    fn encode_row_rejects_bad_code() {
        assert!(spec().encode_row(&[0.0, 0.0], &[3, 0]).is_err());
    }

    #[test]
    fn zero_final_layer_gives_uniform_softmax() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut mlp = MlpModel::new(spec(), &MlpConfig { hidden: vec![8] }, &mut rng);
        let last = mlp.weights.len() - 1;
        mlp.weights[last] = Tensor::zeros(vec![8, 2]).with_grad();
        mlp.biases[last] = Tensor::zeros(vec![1, 2]).with_grad();
        let model = TargetModel::Mlp(mlp);
        let mut tape = Tape::new();
        let num = Tensor::from_rows(&[vec![0.3, -0.7]]).unwrap();
        let logits = model.forward_batch(&mut tape, &num, &[vec![1, 1]]).unwrap();
        let probs = {
            let mut t2 = Tape::new();
            let l = t2
                .constant(&Tensor::new(vec![1, 2], tape.value(logits).to_vec()).unwrap())
                .unwrap();
            let s = t2.softmax_rows(l).unwrap();
            t2.value(s).to_vec()
        };
        for p in probs {
            assert!((p - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn sdt_depth_one_balanced_routing_mixes_leaves_evenly() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let mut sdt = SdtModel::new(spec(), &SdtConfig { depth: 1 }, &mut rng).unwrap();
        // Zero routing weights → sigmoid 0.5 everywhere.
        sdt.inner_w = Tensor::zeros(vec![7, 1]).with_grad();
        sdt.inner_b = Tensor::zeros(vec![1, 1]).with_grad();
        sdt.leaf_logits = Tensor::new(vec![2, 2], vec![2.0, 0.0, 0.0, 1.0])
            .unwrap()
            .with_grad();
        let mut tape = Tape::new();
        let x = tape
            .constant(&Tensor::new(vec![1, 7], vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.2, -0.2]).unwrap())
            .unwrap();
        let logits = sdt.forward_continuous(&mut tape, x).unwrap();
        // Expected: mean of softmax([2,0]) and softmax([0,1]).
        let sm = |a: f64, b: f64| {
            let (ea, eb) = (a.exp(), b.exp());
            (ea / (ea + eb), eb / (ea + eb))
        };
        let (l0, l1) = sm(2.0, 0.0);
        let (r0, r1) = sm(0.0, 1.0);
        let want = [(l0 + r0) / 2.0, (l1 + r1) / 2.0];
        for (got, want) in tape.value(logits).iter().zip(want) {
            assert!((got.exp() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn sdt_path_probabilities_sum_to_one() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let sdt = SdtModel::new(spec(), &SdtConfig { depth: 2 }, &mut rng).unwrap();
        let mut tape = Tape::new();
        let x = tape
            .constant(&Tensor::new(vec![1, 7], vec![0.0, 1.0, 0.0, 0.0, 1.0, 1.3, -0.4]).unwrap())
            .unwrap();
        let paths = sdt.leaf_path_probs(&mut tape, x).unwrap();
        let total: f64 = tape.value(paths).iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(tape.value(paths).len(), 4);
    }

    #[test]
    fn constant_predictor_scores_half_on_balanced_data() {
        // Zero everything: logits are identically zero, argmax is class 0.
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let mut mlp = MlpModel::new(spec(), &MlpConfig { hidden: vec![4] }, &mut rng);
        for p in mlp.params_mut() {
            let zeros = vec![0.0; p.numel()];
            p.data_mut().copy_from_slice(&zeros);
        }
        let model = TargetModel::Mlp(mlp);
        let data = encoded(
            vec![
                vec![0.1, 0.2],
                vec![0.3, -0.1],
                vec![-0.5, 0.9],
                vec![1.0, 1.0],
            ],
            vec![vec![0, 0], vec![1, 1], vec![2, 0], vec![0, 1]],
            vec![0, 0, 1, 1],
        );
        let eval = evaluate(&model, &data).unwrap();
        assert!((eval.accuracy - 0.5).abs() < 1e-12);
    }

    #[test]
    fn evaluate_counts_match_confusion_trace() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let model = TargetModel::Mlp(MlpModel::new(spec(), &MlpConfig::default(), &mut rng));
        let data = encoded(
            vec![
                vec![0.1, 0.4],
                vec![-1.0, 0.2],
                vec![0.9, -0.3],
                vec![0.0, 0.0],
            ],
            vec![vec![0, 0], vec![1, 1], vec![2, 0], vec![0, 1]],
            vec![0, 1, 1, 0],
        );
        let eval = evaluate(&model, &data).unwrap();
        // Accuracy equals confusion-matrix trace / n, tallied independently.
        let preds = model.predict(&data).unwrap();
        let hits = preds.iter().zip(&data.y).filter(|(p, y)| p == y).count();
        let trace: usize = (0..2).map(|i| eval.confusion[i][i]).sum();
        assert_eq!(trace, hits);
        assert!((eval.accuracy - hits as f64 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_of_forward_is_probability_vector() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for model in [
            TargetModel::Mlp(MlpModel::new(spec(), &MlpConfig::default(), &mut rng)),
            TargetModel::Sdt(SdtModel::new(spec(), &SdtConfig::default(), &mut rng).unwrap()),
        ] {
            let data = encoded(
                vec![vec![0.7, -0.2], vec![-0.4, 1.1]],
                vec![vec![1, 0], vec![2, 1]],
                vec![0, 1],
            );
            let mut tape = Tape::new();
            let logits = model
                .forward_batch(&mut tape, &data.num, &data.cat)
                .unwrap();
            let s = tape.softmax_rows(logits).unwrap();
            for row in tape.value(s).chunks(2) {
                let sum: f64 = row.iter().sum();
                assert!((sum - 1.0).abs() < 1e-9);
                assert!(row.iter().all(|&p| p >= 0.0));
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let model =
            TargetModel::Sdt(SdtModel::new(spec(), &SdtConfig { depth: 3 }, &mut rng).unwrap());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        model.save(&path, serde_json::json!({"seed": 6})).unwrap();
        let back = TargetModel::load(&path).unwrap();
        assert_eq!(back.kind(), "sdt");
        let data = encoded(vec![vec![0.1, 0.2]], vec![vec![0, 1]], vec![0]);
        assert_eq!(model.predict(&data).unwrap(), back.predict(&data).unwrap());
    }
}

#[cfg(test)]
mod input_grad_tests {
    use super::*;
    use crate::numerics::check::{finite_difference, max_relative_error, FD_STEP};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    /// Input-space attacks differentiate the cross-entropy w.r.t. the
    /// continuous input; both architectures must pass the finite-difference
    /// check there.
    #[test]
    fn input_gradients_match_finite_differences() {
        let spec = InputSpec {
            num_dim: 2,
            cat_cardinalities: vec![3],
            one_hot: true,
            class_count: 2,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(55);
        let models = [
            TargetModel::Mlp(MlpModel::new(
                spec.clone(),
                &MlpConfig { hidden: vec![8] },
                &mut rng,
            )),
            TargetModel::Sdt(
                SdtModel::new(spec.clone(), &SdtConfig { depth: 3 }, &mut rng).unwrap(),
            ),
        ];
        let x = Tensor::new(vec![1, 5], vec![0.2, 0.9, 0.1, 0.7, -0.4]).unwrap();
        for model in &models {
            let analytic = {
                let mut tape = Tape::new();
                let xv = tape.leaf(&x.clone().with_grad()).unwrap();
                let logits = model.forward_continuous(&mut tape, xv).unwrap();
                let loss = tape.softmax_cross_entropy(logits, &[1]).unwrap();
                let grads = tape.backward(loss).unwrap();
                vec![grads.wrt(xv)]
            };
            let numeric = finite_difference(
                |xs| {
                    let mut tape = Tape::new();
                    let xv = tape.constant(&xs[0])?;
                    let logits = model.forward_continuous(&mut tape, xv)?;
                    let loss = tape.softmax_cross_entropy(logits, &[1])?;
                    Ok(tape.scalar_value(loss))
                },
                std::slice::from_ref(&x),
                FD_STEP,
            )
            .unwrap();
            let err = max_relative_error(&analytic, &numeric);
            assert!(err < 1e-4, "{}: input gradient error {err}", model.kind());
        }
    }
}
