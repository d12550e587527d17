//! Soft decision tree: probabilistic routing through sigmoid-gated inner
//! nodes, leaf class distributions mixed by path probability.
//!
//! The tree is trained end-to-end on the cross-entropy of the log-mixture
//! logits, without the load-balancing penalty some soft-tree variants add.

use crate::error::{Error, Result};
use crate::models::InputSpec;
use crate::numerics::{Tape, Tensor, Var};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct SdtConfig {
    pub depth: usize,
}

impl Default for SdtConfig {
    fn default() -> Self {
        Self { depth: 4 }
    }
}

#[derive(Debug, Clone)]
pub struct SdtModel {
    pub spec: InputSpec,
    pub depth: usize,
    /// Routing weights `[input_width × inner_count]`, inner nodes in BFS order.
    pub inner_w: Tensor,
    /// Routing biases `[1 × inner_count]`.
    pub inner_b: Tensor,
    /// Leaf logits `[leaf_count × class_count]`; softmax gives distributions.
    pub leaf_logits: Tensor,
}

impl SdtModel {
    pub fn new<R: Rng>(spec: InputSpec, config: &SdtConfig, rng: &mut R) -> Result<Self> {
        if config.depth == 0 {
            return Err(Error::Config("soft decision tree needs depth >= 1".into()));
        }
        let inner = (1 << config.depth) - 1;
        let leaves = 1 << config.depth;
        let width = spec.input_width();
        let inner_w =
            Tensor::randn(vec![width, inner], (1.0 / width as f64).sqrt(), rng).with_grad();
        let inner_b = Tensor::zeros(vec![1, inner]).with_grad();
        let leaf_logits = Tensor::randn(vec![leaves, spec.class_count], 0.1, rng).with_grad();
        Ok(Self {
            spec,
            depth: config.depth,
            inner_w,
            inner_b,
            leaf_logits,
        })
    }

    pub fn leaf_count(&self) -> usize {
        1 << self.depth
    }

    /// Path probability of every leaf for a batch `[n × leaf_count]`.
    /// Routing probability `σ(w·x + b)` picks the left child.
    pub fn leaf_path_probs(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        self.leaf_path_probs_impl(tape, x, false)
    }

    fn leaf_path_probs_impl(&self, tape: &mut Tape, x: Var, frozen: bool) -> Result<Var> {
        let n = tape.shape(x)[0];
        let (wv, bv) = if frozen {
            (tape.constant(&self.inner_w)?, tape.constant(&self.inner_b)?)
        } else {
            (tape.leaf(&self.inner_w)?, tape.leaf(&self.inner_b)?)
        };
        let lin = tape.matmul(x, wv)?;
        let routed = tape.add_row(lin, bv)?;
        let gate = tape.sigmoid(routed)?; // [n × inner]

        let ones = tape.constant(&Tensor::full(vec![n, 1], 1.0)?)?;
        let mut paths = vec![ones];
        for level in 0..self.depth {
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
        tape.concat_cols(&paths)
    }

    /// Log-mixture logits: `log Σ_leaf P(leaf|x) · softmax(leaf_logits)`.
    pub fn forward_continuous(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        self.forward_impl(tape, x, false)
    }

    /// Forward with parameters bound as constants (attack loops).
    pub fn forward_frozen(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        self.forward_impl(tape, x, true)
    }

    fn forward_impl(&self, tape: &mut Tape, x: Var, frozen: bool) -> Result<Var> {
        let paths = self.leaf_path_probs_impl(tape, x, frozen)?;
        let leaves = if frozen {
            tape.constant(&self.leaf_logits)?
        } else {
            tape.leaf(&self.leaf_logits)?
        };
        let dists = tape.softmax_rows(leaves)?;
        let mixture = tape.matmul(paths, dists)?;
        tape.log(mixture)
    }

    pub fn params(&self) -> Vec<&Tensor> {
        vec![&self.inner_w, &self.inner_b, &self.leaf_logits]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.inner_w, &mut self.inner_b, &mut self.leaf_logits]
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("inner.w".into(), &self.inner_w),
            ("inner.b".into(), &self.inner_b),
            ("leaf.logits".into(), &self.leaf_logits),
        ]
    }
}
