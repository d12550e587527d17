//! Fully connected classifier over the one-hot + numeric representation.

use crate::error::Result;
use crate::models::InputSpec;
use crate::numerics::{Tape, Tensor, Var};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 32],
        }
    }
}

#[derive(Debug, Clone)]
pub struct MlpModel {
    pub spec: InputSpec,
    pub hidden: Vec<usize>,
    /// Weight/bias per layer; the final layer maps to class logits.
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

impl MlpModel {
    pub fn new<R: Rng>(spec: InputSpec, config: &MlpConfig, rng: &mut R) -> Self {
        let mut dims = vec![spec.input_width()];
        dims.extend(&config.hidden);
        dims.push(spec.class_count);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = (2.0 / fan_in as f64).sqrt();
            weights.push(Tensor::randn(vec![fan_in, fan_out], scale, rng).with_grad());
            biases.push(Tensor::zeros(vec![1, fan_out]).with_grad());
        }
        Self {
            spec,
            hidden: config.hidden.clone(),
            weights,
            biases,
        }
    }

    /// Logits from a pre-assembled continuous input `[n × input_width]`.
    pub fn forward_continuous(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        self.forward_impl(tape, x, false)
    }

    /// Forward with parameters bound as constants (attack loops).
    pub fn forward_frozen(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        self.forward_impl(tape, x, true)
    }

    fn forward_impl(&self, tape: &mut Tape, x: Var, frozen: bool) -> Result<Var> {
        let mut h = x;
        let last = self.weights.len() - 1;
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let (wv, bv) = if frozen {
                (tape.constant(w)?, tape.constant(b)?)
            } else {
                (tape.leaf(w)?, tape.leaf(b)?)
            };
            let lin = tape.matmul(h, wv)?;
            h = tape.add_row(lin, bv)?;
            if i < last {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.weights.iter().chain(&self.biases).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .collect()
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, w) in self.weights.iter().enumerate() {
            out.push((format!("layer{i}.w"), w));
        }
        for (i, b) in self.biases.iter().enumerate() {
            out.push((format!("layer{i}.b"), b));
        }
        out
    }
}
