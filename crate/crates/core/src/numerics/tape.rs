//! Reverse-mode automatic differentiation on a flat operation tape.
//!
//! A [`Tape`] owns every intermediate value of one forward pass. Operations
//! append nodes in topological order; [`Tape::backward`] walks them once in
//! reverse and accumulates gradients for every node that requires them.
//! Tapes are single-threaded by construction; independent tapes may run on
//! separate threads.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Handle to a value on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    pub(crate) id: usize,
}

/// Batch statistics captured by a training-mode batch-norm node, so the
/// caller can fold them into running averages.
#[derive(Debug, Clone)]
pub struct BatchMoments {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Matmul {
        a: usize,
        b: usize,
    },
    Add {
        a: usize,
        b: usize,
    },
    Sub {
        a: usize,
        b: usize,
    },
    Mul {
        a: usize,
        b: usize,
    },
    /// Row-broadcast addition: `a[m×n] + row[n]`.
    AddRow {
        a: usize,
        row: usize,
    },
    /// Row-broadcast multiplication: `a[m×n] ⊙ row[n]`.
    MulRow {
        a: usize,
        row: usize,
    },
    Relu {
        a: usize,
    },
    Sigmoid {
        a: usize,
    },
    Exp {
        a: usize,
    },
    Log {
        a: usize,
    },
    Square {
        a: usize,
    },
    Abs {
        a: usize,
    },
    Scale {
        a: usize,
        c: f64,
    },
    AddScalar {
        a: usize,
        // shift is applied in forward; gradient passes through unchanged
    },
    Clamp {
        a: usize,
        lo: f64,
        hi: f64,
    },
    Sum {
        a: usize,
    },
    Mean {
        a: usize,
    },
    ConcatCols {
        parts: Vec<usize>,
        widths: Vec<usize>,
    },
    SliceCols {
        a: usize,
        start: usize,
        len: usize,
    },
    GatherRows {
        table: usize,
        codes: Vec<usize>,
    },
    SoftmaxRows {
        a: usize,
    },
    SoftmaxCrossEntropy {
        logits: usize,
        labels: Vec<usize>,
        /// cached row-wise softmax probabilities
        probs: Vec<f64>,
    },
    MarginHinge {
        logits: usize,
        labels: Vec<usize>,
        /// per-row (active, runner-up index) for rows with positive hinge
        active: Vec<Option<usize>>,
    },
    BatchNormTrain {
        x: usize,
        gamma: usize,
        beta: usize,
        /// cached normalised activations
        xhat: Vec<f64>,
        /// cached 1/sqrt(var + eps) per column
        inv_std: Vec<f64>,
    },
}

struct Node {
    op: Op,
    shape: Vec<usize>,
    value: Vec<f64>,
    requires: bool,
}

/// Gradients produced by one backward pass, indexed by tape node.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<usize>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `v`. Nodes the loss never reached get a
    /// zero gradient of the right length.
    pub fn wrt(&self, v: Var) -> Vec<f64> {
        match &self.grads[v.id] {
            Some(g) => g.clone(),
            None => vec![0.0; self.shapes[v.id]],
        }
    }
}

/// Flat arena of forward values plus enough cached state to replay each
/// operation backwards.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn check_finite(op: &'static str, data: &[f64]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { op })
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.id].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.id].shape
    }

    /// Scalar value of a single-element node.
    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.id].value[0]
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, value: Vec<f64>, requires: bool) -> Var {
        let id = self.nodes.len();
        self.nodes.push(Node {
            op,
            shape,
            value,
            requires,
        });
        Var { id }
    }

    fn requires(&self, id: usize) -> bool {
        self.nodes[id].requires
    }

    /// Bind a tensor as a leaf, honouring its `requires_grad` flag.
    pub fn leaf(&mut self, t: &Tensor) -> Result<Var> {
        check_finite("leaf", t.data())?;
        Ok(self.push(
            Op::Leaf,
            t.shape().to_vec(),
            t.data().to_vec(),
            t.requires_grad(),
        ))
    }

    /// Bind a tensor as a non-differentiable constant.
    pub fn constant(&mut self, t: &Tensor) -> Result<Var> {
        check_finite("constant", t.data())?;
        Ok(self.push(Op::Leaf, t.shape().to_vec(), t.data().to_vec(), false))
    }

    /// Zero-initialised differentiable leaf.
    pub fn zeros_leaf(&mut self, shape: Vec<usize>) -> Var {
        let numel = shape.iter().product();
        self.push(Op::Leaf, shape, vec![0.0; numel], true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, ka) = dims2(&self.nodes[a.id].shape, "matmul lhs")?;
        let (kb, n) = dims2(&self.nodes[b.id].shape, "matmul rhs")?;
        if ka != kb {
            return Err(Error::Shape(format!(
                "matmul inner dimensions disagree: {ka} vs {kb}"
            )));
        }
        let mut out = vec![0.0; m * n];
        {
            let av = &self.nodes[a.id].value;
            let bv = &self.nodes[b.id].value;
            for i in 0..m {
                for p in 0..ka {
                    let lhs = av[i * ka + p];
                    if lhs == 0.0 {
                        continue;
                    }
                    let row = &bv[p * n..(p + 1) * n];
                    let dst = &mut out[i * n..(i + 1) * n];
                    for (o, &r) in dst.iter_mut().zip(row) {
                        *o += lhs * r;
                    }
                }
            }
        }
        check_finite("matmul", &out)?;
        let req = self.requires(a.id) || self.requires(b.id);
        Ok(self.push(Op::Matmul { a: a.id, b: b.id }, vec![m, n], out, req))
    }

    fn binary_elementwise(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        make: impl Fn(usize, usize) -> Op,
    ) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.id], &self.nodes[b.id]);
        // Equal shapes, or scalar on either side.
        let out_shape = if av.shape == bv.shape || bv.value.len() == 1 {
            av.shape.clone()
        } else if av.value.len() == 1 {
            bv.shape.clone()
        } else {
            return Err(Error::Shape(format!(
                "{name}: incompatible shapes {:?} vs {:?}",
                av.shape, bv.shape
            )));
        };
        let numel: usize = out_shape.iter().product();
        let mut out = Vec::with_capacity(numel);
        for i in 0..numel {
            let x = av.value[if av.value.len() == 1 { 0 } else { i }];
            let y = bv.value[if bv.value.len() == 1 { 0 } else { i }];
            out.push(f(x, y));
        }
        check_finite(name, &out)?;
        let req = self.requires(a.id) || self.requires(b.id);
        Ok(self.push(make(a.id, b.id), out_shape, out, req))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_elementwise("add", a, b, |x, y| x + y, |a, b| Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_elementwise("sub", a, b, |x, y| x - y, |a, b| Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_elementwise("mul", a, b, |x, y| x * y, |a, b| Op::Mul { a, b })
    }

    fn row_broadcast(
        &mut self,
        name: &'static str,
        a: Var,
        row: Var,
        f: impl Fn(f64, f64) -> f64,
        make: impl Fn(usize, usize) -> Op,
    ) -> Result<Var> {
        let (m, n) = dims2(&self.nodes[a.id].shape, name)?;
        let rlen = self.nodes[row.id].value.len();
        if rlen != n {
            return Err(Error::Shape(format!(
                "{name}: row of length {rlen} against {m}×{n} matrix"
            )));
        }
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                out.push(f(
                    self.nodes[a.id].value[i * n + j],
                    self.nodes[row.id].value[j],
                ));
            }
        }
        check_finite(name, &out)?;
        let req = self.requires(a.id) || self.requires(row.id);
        Ok(self.push(make(a.id, row.id), vec![m, n], out, req))
    }

    /// `a[m×n] + row[n]`, broadcasting the row over every matrix row.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.row_broadcast(
            "add_row",
            a,
            row,
            |x, y| x + y,
            |a, row| Op::AddRow { a, row },
        )
    }

    /// `a[m×n] ⊙ row[n]`.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.row_broadcast(
            "mul_row",
            a,
            row,
            |x, y| x * y,
            |a, row| Op::MulRow { a, row },
        )
    }

    fn unary(
        &mut self,
        name: &'static str,
        a: Var,
        f: impl Fn(f64) -> f64,
        make: impl Fn(usize) -> Op,
    ) -> Result<Var> {
        let out: Vec<f64> = self.nodes[a.id].value.iter().map(|&x| f(x)).collect();
        check_finite(name, &out)?;
        let shape = self.nodes[a.id].shape.clone();
        let req = self.requires(a.id);
        Ok(self.push(make(a.id), shape, out, req))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary("relu", a, |x| x.max(0.0), |a| Op::Relu { a })
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary("sigmoid", a, stable_sigmoid, |a| Op::Sigmoid { a })
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary("exp", a, f64::exp, |a| Op::Exp { a })
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if self.nodes[a.id].value.iter().any(|&x| x <= 0.0) {
            return Err(Error::NumericDomain {
                op: "log",
                message: "log of a non-positive value".into(),
            });
        }
        self.unary("log", a, f64::ln, |a| Op::Log { a })
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary("square", a, |x| x * x, |a| Op::Square { a })
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.unary("abs", a, f64::abs, |a| Op::Abs { a })
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary("scale", a, |x| x * c, |a| Op::Scale { a, c })
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary("add_scalar", a, |x| x + c, |a| Op::AddScalar { a })
    }

    /// Elementwise clamp. Gradient passes through inside `[lo, hi]` and is
    /// zero outside (used to keep log-variances bounded).
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        self.unary("clamp", a, |x| x.clamp(lo, hi), |a| Op::Clamp { a, lo, hi })
    }

    /// Sum of all elements, as a scalar node.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s: f64 = self.nodes[a.id].value.iter().sum();
        if !s.is_finite() {
            return Err(Error::NonFinite { op: "sum" });
        }
        let req = self.requires(a.id);
        Ok(self.push(Op::Sum { a: a.id }, vec![1], vec![s], req))
    }

    /// Mean of all elements, as a scalar node.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.nodes[a.id].value.len().max(1) as f64;
        let s: f64 = self.nodes[a.id].value.iter().sum::<f64>() / n;
        if !s.is_finite() {
            return Err(Error::NonFinite { op: "mean" });
        }
        let req = self.requires(a.id);
        Ok(self.push(Op::Mean { a: a.id }, vec![1], vec![s], req))
    }

    /// Concatenate 2-D nodes along columns. All parts must share a row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Contract("concat_cols of zero parts".into()));
        }
        let (m, _) = dims2(&self.nodes[parts[0].id].shape, "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (rows, cols) = dims2(&self.nodes[p.id].shape, "concat_cols")?;
            if rows != m {
                return Err(Error::Shape(format!(
                    "concat_cols: row counts disagree ({m} vs {rows})"
                )));
            }
            widths.push(cols);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for i in 0..m {
            for (p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.nodes[p.id].value[i * w..(i + 1) * w]);
            }
        }
        let req = parts.iter().any(|p| self.requires(p.id));
        Ok(self.push(
            Op::ConcatCols {
                parts: parts.iter().map(|p| p.id).collect(),
                widths,
            },
            vec![m, total],
            out,
            req,
        ))
    }

    /// Columns `[start, start+len)` of a 2-D node.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = dims2(&self.nodes[a.id].shape, "slice_cols")?;
        if start + len > n {
            return Err(Error::Shape(format!(
                "slice_cols: [{start}, {}) out of {n} columns",
                start + len
            )));
        }
        let mut out = Vec::with_capacity(m * len);
        for i in 0..m {
            out.extend_from_slice(&self.nodes[a.id].value[i * n + start..i * n + start + len]);
        }
        let req = self.requires(a.id);
        Ok(self.push(
            Op::SliceCols {
                a: a.id,
                start,
                len,
            },
            vec![m, len],
            out,
            req,
        ))
    }

    /// Embedding lookup: rows of `table[v×e]` selected by integer codes.
    pub fn gather_rows(&mut self, table: Var, codes: &[usize]) -> Result<Var> {
        let (v, e) = dims2(&self.nodes[table.id].shape, "gather_rows")?;
        for (i, &c) in codes.iter().enumerate() {
            if c >= v {
                return Err(Error::Index(format!(
                    "gather_rows: code {c} at position {i} out of range [0, {v})"
                )));
            }
        }
        let mut out = Vec::with_capacity(codes.len() * e);
        for &c in codes {
            out.extend_from_slice(&self.nodes[table.id].value[c * e..(c + 1) * e]);
        }
        let req = self.requires(table.id);
        Ok(self.push(
            Op::GatherRows {
                table: table.id,
                codes: codes.to_vec(),
            },
            vec![codes.len(), e],
            out,
            req,
        ))
    }

    /// Row-wise softmax with max-subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = dims2(&self.nodes[a.id].shape, "softmax_rows")?;
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            let row = &self.nodes[a.id].value[i * n..(i + 1) * n];
            out.extend(softmax_row(row));
        }
        check_finite("softmax_rows", &out)?;
        let req = self.requires(a.id);
        Ok(self.push(Op::SoftmaxRows { a: a.id }, vec![m, n], out, req))
    }

    /// Mean over the batch of `−log softmax(logits)[label]`, numerically
    /// stabilised via max-subtraction.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (m, c) = dims2(&self.nodes[logits.id].shape, "softmax_cross_entropy")?;
        if labels.len() != m {
            return Err(Error::Shape(format!(
                "softmax_cross_entropy: {m} rows but {} labels",
                labels.len()
            )));
        }
        let mut probs = Vec::with_capacity(m * c);
        let mut loss = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            if y >= c {
                return Err(Error::Index(format!(
                    "label {y} out of range [0, {c}) at row {i}"
                )));
            }
            let row = &self.nodes[logits.id].value[i * c..(i + 1) * c];
            let maxv = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = maxv + row.iter().map(|&v| (v - maxv).exp()).sum::<f64>().ln();
            loss += lse - row[y];
            probs.extend(row.iter().map(|&v| (v - lse).exp()));
        }
        loss /= m as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                op: "softmax_cross_entropy",
            });
        }
        let req = self.requires(logits.id);
        Ok(self.push(
            Op::SoftmaxCrossEntropy {
                logits: logits.id,
                labels: labels.to_vec(),
                probs,
            },
            vec![1],
            vec![loss],
            req,
        ))
    }

    /// Sum over rows of the C&W margin hinge
    /// `max(logits[y] − max_{i≠y} logits[i] + kappa, 0)`.
    pub fn margin_hinge(&mut self, logits: Var, labels: &[usize], kappa: f64) -> Result<Var> {
        let (m, c) = dims2(&self.nodes[logits.id].shape, "margin_hinge")?;
        if labels.len() != m {
            return Err(Error::Shape(format!(
                "margin_hinge: {m} rows but {} labels",
                labels.len()
            )));
        }
        if c < 2 {
            return Err(Error::Contract(
                "margin_hinge needs at least two classes".into(),
            ));
        }
        let mut loss = 0.0;
        let mut active = Vec::with_capacity(m);
        for (i, &y) in labels.iter().enumerate() {
            if y >= c {
                return Err(Error::Index(format!(
                    "label {y} out of range [0, {c}) at row {i}"
                )));
            }
            let row = &self.nodes[logits.id].value[i * c..(i + 1) * c];
            let mut best = f64::NEG_INFINITY;
            let mut best_j = 0;
            for (j, &v) in row.iter().enumerate() {
                if j != y && v > best {
                    best = v;
                    best_j = j;
                }
            }
            let h = row[y] - best + kappa;
            if h > 0.0 {
                loss += h;
                active.push(Some(best_j));
            } else {
                active.push(None);
            }
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite { op: "margin_hinge" });
        }
        let req = self.requires(logits.id);
        Ok(self.push(
            Op::MarginHinge {
                logits: logits.id,
                labels: labels.to_vec(),
                active,
            },
            vec![1],
            vec![loss],
            req,
        ))
    }

    /// Training-mode batch normalisation over columns:
    /// `y = gamma ⊙ (x − μ_B)/sqrt(σ²_B + eps) + beta`, returning the batch
    /// moments so the caller can update running statistics.
    pub fn batchnorm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, BatchMoments)> {
        let (m, n) = dims2(&self.nodes[x.id].shape, "batchnorm")?;
        if self.nodes[gamma.id].value.len() != n || self.nodes[beta.id].value.len() != n {
            return Err(Error::Shape(
                "batchnorm: gamma/beta width must match columns".into(),
            ));
        }
        let xv = &self.nodes[x.id].value;
        let mut mean = vec![0.0; n];
        let mut var = vec![0.0; n];
        for i in 0..m {
            for j in 0..n {
                mean[j] += xv[i * n + j];
            }
        }
        for mj in &mut mean {
            *mj /= m as f64;
        }
        for i in 0..m {
            for j in 0..n {
                let d = xv[i * n + j] - mean[j];
                var[j] += d * d;
            }
        }
        for vj in &mut var {
            *vj /= m as f64;
        }
        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = Vec::with_capacity(m * n);
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                let h = (xv[i * n + j] - mean[j]) * inv_std[j];
                xhat.push(h);
                out.push(self.nodes[gamma.id].value[j] * h + self.nodes[beta.id].value[j]);
            }
        }
        check_finite("batchnorm", &out)?;
        let req = self.requires(x.id) || self.requires(gamma.id) || self.requires(beta.id);
        let v = self.push(
            Op::BatchNormTrain {
                x: x.id,
                gamma: gamma.id,
                beta: beta.id,
                xhat,
                inv_std: inv_std.clone(),
            },
            vec![m, n],
            out,
            req,
        );
        Ok((v, BatchMoments { mean, var }))
    }

    /// One reverse sweep from a scalar loss. Every node reachable from the
    /// loss with `requires_grad` gets its gradient; unreached nodes report
    /// zeros through [`Gradients::wrt`].
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.nodes[loss.id].value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.id].shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.id] = Some(vec![1.0]);

        for id in (0..=loss.id).rev() {
            if !self.nodes[id].requires {
                continue;
            }
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            self.accumulate(id, &g, &mut grads);
            grads[id] = Some(g);
        }

        let shapes = self.nodes.iter().map(|n| n.value.len()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn bump(&self, grads: &mut [Option<Vec<f64>>], id: usize, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[id].requires {
            return;
        }
        let slot = grads[id].get_or_insert_with(|| vec![0.0; self.nodes[id].value.len()]);
        f(slot);
    }

    #[allow(clippy::too_many_lines)]
    fn accumulate(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let (m, k) = (self.nodes[*a].shape[0], self.nodes[*a].shape[1]);
                let n = self.nodes[*b].shape[1];
                let av = &self.nodes[*a].value;
                let bv = &self.nodes[*b].value;
                // dA = g · Bᵀ
                self.bump(grads, *a, |da| {
                    for i in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += g[i * n + j] * bv[p * n + j];
                            }
                            da[i * k + p] += s;
                        }
                    }
                });
                // dB = Aᵀ · g
                self.bump(grads, *b, |db| {
                    for p in 0..k {
                        for j in 0..n {
                            let mut s = 0.0;
                            for i in 0..m {
                                s += av[i * k + p] * g[i * n + j];
                            }
                            db[p * n + j] += s;
                        }
                    }
                });
            }
            Op::Add { a, b } | Op::Sub { a, b } => {
                let sign = if matches!(self.nodes[id].op, Op::Sub { .. }) {
                    -1.0
                } else {
                    1.0
                };
                let alen = self.nodes[*a].value.len();
                let blen = self.nodes[*b].value.len();
                self.bump(grads, *a, |da| {
                    if alen == 1 {
                        da[0] += g.iter().sum::<f64>();
                    } else {
                        for (d, &gi) in da.iter_mut().zip(g) {
                            *d += gi;
                        }
                    }
                });
                self.bump(grads, *b, |db| {
                    if blen == 1 {
                        db[0] += sign * g.iter().sum::<f64>();
                    } else {
                        for (d, &gi) in db.iter_mut().zip(g) {
                            *d += sign * gi;
                        }
                    }
                });
            }
            Op::Mul { a, b } => {
                let av = &self.nodes[*a].value;
                let bv = &self.nodes[*b].value;
                self.bump(grads, *a, |da| {
                    if av.len() == 1 {
                        da[0] += g
                            .iter()
                            .enumerate()
                            .map(|(i, &gi)| gi * bv[if bv.len() == 1 { 0 } else { i }])
                            .sum::<f64>();
                    } else {
                        for (i, (d, &gi)) in da.iter_mut().zip(g).enumerate() {
                            *d += gi * bv[if bv.len() == 1 { 0 } else { i }];
                        }
                    }
                });
                self.bump(grads, *b, |db| {
                    if bv.len() == 1 {
                        db[0] += g
                            .iter()
                            .enumerate()
                            .map(|(i, &gi)| gi * av[if av.len() == 1 { 0 } else { i }])
                            .sum::<f64>();
                    } else {
                        for (i, (d, &gi)) in db.iter_mut().zip(g).enumerate() {
                            *d += gi * av[if av.len() == 1 { 0 } else { i }];
                        }
                    }
                });
            }
            Op::AddRow { a, row } => {
                let n = self.nodes[id].shape[1];
                self.bump(grads, *a, |da| {
                    for (d, &gi) in da.iter_mut().zip(g) {
                        *d += gi;
                    }
                });
                self.bump(grads, *row, |dr| {
                    for (i, &gi) in g.iter().enumerate() {
                        dr[i % n] += gi;
                    }
                });
            }
            Op::MulRow { a, row } => {
                let n = self.nodes[id].shape[1];
                let av = &self.nodes[*a].value;
                let rv = &self.nodes[*row].value;
                self.bump(grads, *a, |da| {
                    for (i, (d, &gi)) in da.iter_mut().zip(g).enumerate() {
                        *d += gi * rv[i % n];
                    }
                });
                self.bump(grads, *row, |dr| {
                    for (i, &gi) in g.iter().enumerate() {
                        dr[i % n] += gi * av[i];
                    }
                });
            }
            Op::Relu { a } => {
                let av = &self.nodes[*a].value;
                self.bump(grads, *a, |da| {
                    for (i, (d, &gi)) in da.iter_mut().zip(g).enumerate() {
                        if av[i] > 0.0 {
                            *d += gi;
                        }
                    }
                });
            }
            Op::Sigmoid { a } => {
                let sv = &self.nodes[id].value;
                self.bump(grads, *a, |da| {
                    for (i, (d, &gi)) in da.iter_mut().zip(g).enumerate() {
                        *d += gi * sv[i] * (1.0 - sv[i]);
                    }
                });
            }
            Op::Exp { a } => {
                let ev = &self.nodes[id].value;
                self.bump(grads, *a, |da| {
                    for (i, (d, &gi)) in da.iter_mut().zip(g).enumerate() {
                        *d += gi * ev[i];
                    }
                });
            }
            Op::Log { a } => {
                let av = &self.nodes[*a].value;
                self.bump(grads, *a, |da| {
                    for (i, (d, &gi)) in da.iter_mut().zip(g).enumerate() {
                        *d += gi / av[i];
                    }
                });
            }
            Op::Square { a } => {
                let av = &self.nodes[*a].value;
                self.bump(grads, *a, |da| {
                    for (i, (d, &gi)) in da.iter_mut().zip(g).enumerate() {
                        *d += gi * 2.0 * av[i];
                    }
                });
            }
            Op::Abs { a } => {
                let av = &self.nodes[*a].value;
                self.bump(grads, *a, |da| {
                    for (i, (d, &gi)) in da.iter_mut().zip(g).enumerate() {
                        *d += gi * if av[i] >= 0.0 { 1.0 } else { -1.0 };
                    }
                });
            }
            Op::Scale { a, c } => {
                let c = *c;
                self.bump(grads, *a, |da| {
                    for (d, &gi) in da.iter_mut().zip(g) {
                        *d += gi * c;
                    }
                });
            }
            Op::AddScalar { a } => {
                self.bump(grads, *a, |da| {
                    for (d, &gi) in da.iter_mut().zip(g) {
                        *d += gi;
                    }
                });
            }
            Op::Clamp { a, lo, hi } => {
                let av = &self.nodes[*a].value;
                let (lo, hi) = (*lo, *hi);
                self.bump(grads, *a, |da| {
                    for (i, (d, &gi)) in da.iter_mut().zip(g).enumerate() {
                        if av[i] > lo && av[i] < hi {
                            *d += gi;
                        }
                    }
                });
            }
            Op::Sum { a } => {
                self.bump(grads, *a, |da| {
                    for d in da.iter_mut() {
                        *d += g[0];
                    }
                });
            }
            Op::Mean { a } => {
                let n = self.nodes[*a].value.len().max(1) as f64;
                self.bump(grads, *a, |da| {
                    for d in da.iter_mut() {
                        *d += g[0] / n;
                    }
                });
            }
            Op::ConcatCols { parts, widths } => {
                let m = self.nodes[id].shape[0];
                let total = self.nodes[id].shape[1];
                let mut offset = 0;
                for (p, &w) in parts.iter().zip(widths) {
                    let off = offset;
                    self.bump(grads, *p, |dp| {
                        for i in 0..m {
                            for j in 0..w {
                                dp[i * w + j] += g[i * total + off + j];
                            }
                        }
                    });
                    offset += w;
                }
            }
            Op::SliceCols { a, start, len } => {
                let m = self.nodes[id].shape[0];
                let n = self.nodes[*a].shape[1];
                let (start, len) = (*start, *len);
                self.bump(grads, *a, |da| {
                    for i in 0..m {
                        for j in 0..len {
                            da[i * n + start + j] += g[i * len + j];
                        }
                    }
                });
            }
            Op::GatherRows { table, codes } => {
                let e = self.nodes[id].shape[1];
                self.bump(grads, *table, |dt| {
                    for (i, &c) in codes.iter().enumerate() {
                        for j in 0..e {
                            dt[c * e + j] += g[i * e + j];
                        }
                    }
                });
            }
            Op::SoftmaxRows { a } => {
                let (m, n) = (self.nodes[id].shape[0], self.nodes[id].shape[1]);
                let sv = &self.nodes[id].value;
                self.bump(grads, *a, |da| {
                    for i in 0..m {
                        let srow = &sv[i * n..(i + 1) * n];
                        let grow = &g[i * n..(i + 1) * n];
                        let dot: f64 = srow.iter().zip(grow).map(|(&s, &gi)| s * gi).sum();
                        for j in 0..n {
                            da[i * n + j] += srow[j] * (grow[j] - dot);
                        }
                    }
                });
            }
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let m = labels.len();
                let c = self.nodes[*logits].shape[1];
                self.bump(grads, *logits, |dl| {
                    let scale = g[0] / m as f64;
                    for (i, &y) in labels.iter().enumerate() {
                        for j in 0..c {
                            let indicator = if j == y { 1.0 } else { 0.0 };
                            dl[i * c + j] += scale * (probs[i * c + j] - indicator);
                        }
                    }
                });
            }
            Op::MarginHinge {
                logits,
                labels,
                active,
            } => {
                let c = self.nodes[*logits].shape[1];
                self.bump(grads, *logits, |dl| {
                    for (i, (&y, act)) in labels.iter().zip(active).enumerate() {
                        if let Some(j) = act {
                            dl[i * c + y] += g[0];
                            dl[i * c + j] -= g[0];
                        }
                    }
                });
            }
            Op::BatchNormTrain {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let (m, n) = (self.nodes[id].shape[0], self.nodes[id].shape[1]);
                let gv = &self.nodes[*gamma].value;
                self.bump(grads, *beta, |db| {
                    for i in 0..m {
                        for j in 0..n {
                            db[j] += g[i * n + j];
                        }
                    }
                });
                self.bump(grads, *gamma, |dg| {
                    for i in 0..m {
                        for j in 0..n {
                            dg[j] += g[i * n + j] * xhat[i * n + j];
                        }
                    }
                });
                self.bump(grads, *x, |dx| {
                    // Column-wise sums of dxhat and dxhat·xhat.
                    let mut sum_dh = vec![0.0; n];
                    let mut sum_dh_h = vec![0.0; n];
                    for i in 0..m {
                        for j in 0..n {
                            let dh = g[i * n + j] * gv[j];
                            sum_dh[j] += dh;
                            sum_dh_h[j] += dh * xhat[i * n + j];
                        }
                    }
                    let mf = m as f64;
                    for i in 0..m {
                        for j in 0..n {
                            let dh = g[i * n + j] * gv[j];
                            dx[i * n + j] += inv_std[j] / mf
                                * (mf * dh - sum_dh[j] - xhat[i * n + j] * sum_dh_h[j]);
                        }
                    }
                });
            }
        }
    }
}

fn dims2(shape: &[usize], op: &str) -> Result<(usize, usize)> {
    match shape {
        [m, n] => Ok((*m, *n)),
        other => Err(Error::Shape(format!("{op}: expected 2-D, got {other:?}"))),
    }
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_row(row: &[f64]) -> Vec<f64> {
    let maxv = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&v| (v - maxv).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Mean over the batch of the Gaussian KL against the standard-normal prior:
/// `−½ Σ_j (1 + log_var − mu² − exp(log_var))`, composed from primitives so
/// gradients flow to both heads.
pub fn kl_gaussian(tape: &mut Tape, mu: Var, log_var: Var) -> Result<Var> {
    let (rows, _) = dims2(tape.shape(mu), "kl_gaussian")?;
    let mu_sq = tape.square(mu)?;
    let exp_lv = tape.exp(log_var)?;
    let one_plus = tape.add_scalar(log_var, 1.0)?;
    let t1 = tape.sub(one_plus, mu_sq)?;
    let t2 = tape.sub(t1, exp_lv)?;
    let summed = tape.sum(t2)?;
    tape.scale(summed, -0.5 / rows as f64)
}
