//! Reverse-mode autodiff over a recorded operation tape.
//!
//! A [`Tape`] owns every intermediate value of one forward pass. Operations
//! append nodes, so the tape is already in topological order; `backward`
//! walks it once in reverse, accumulating exact analytic gradients into the
//! nodes that can reach a parameter. Parameters live outside the tape and
//! are re-bound each step, which makes "grads are reset between steps"
//! automatic.

use std::rc::Rc;

use super::matrix::Matrix;
use super::sparse::{CsrStructure, SparseMatrix};
use super::NumericsError;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TensorId(usize);

/// Activation applied by a layer after its linear part.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    None,
    Relu,
    LeakyRelu(f64),
}

/// Loss selector for training loops.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    BceWithLogits,
    CrossEntropy,
}

enum Op {
    Leaf,
    MatMul(TensorId, TensorId),
    SpMm {
        mat: Rc<SparseMatrix>,
        rhs: TensorId,
    },
    /// y[i,:] = sum over entries k of row i: weights[k] * rhs[col(k),:]
    EdgeWeightedSpMm {
        adj: Rc<CsrStructure>,
        weights: TensorId,
        rhs: TensorId,
    },
    Add(TensorId, TensorId),
    /// Broadcast add of a 1 x c row (bias) onto every row of the left input.
    AddRow(TensorId, TensorId),
    Mul(TensorId, TensorId),
    ConcatCols(TensorId, TensorId),
    Relu(TensorId),
    LeakyRelu(TensorId, f64),
    Sigmoid(TensorId),
    RowSoftmax(TensorId),
    SegmentSoftmax {
        input: TensorId,
        offsets: Rc<Vec<usize>>,
    },
    MeanRows(TensorId),
    GatherRows {
        input: TensorId,
        indices: Rc<Vec<usize>>,
    },
    SumAll(TensorId),
    BceWithLogits {
        logits: TensorId,
        targets: Rc<Vec<f64>>,
    },
    CrossEntropy {
        logits: TensorId,
        classes: Rc<Vec<usize>>,
    },
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Recorded forward pass with reverse-mode gradients.
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Matrix>>,
    check_finite: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            check_finite: false,
        }
    }

    /// Strict mode: every operation verifies its inputs are finite.
    pub fn with_finite_checks() -> Self {
        Self {
            check_finite: true,
            ..Self::new()
        }
    }

    /// Record a constant input. Gradients do not flow into it.
    pub fn leaf(&mut self, value: Matrix) -> TensorId {
        self.push(value, Op::Leaf, false)
    }

    /// Record a learnable parameter. `grad` is available after `backward`.
    pub fn param(&mut self, value: Matrix) -> TensorId {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, id: TensorId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: TensorId) -> (usize, usize) {
        self.nodes[id.0].value.shape()
    }

    /// Gradient of the last backward target w.r.t. this node, if any flowed
    /// into it.
    pub fn grad(&self, id: TensorId) -> Option<&Matrix> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Gradient, or zeros for a node the loss never reached.
    pub fn grad_or_zeros(&self, id: TensorId) -> Matrix {
        match self.grad(id) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shape(id);
                Matrix::zeros(r, c)
            }
        }
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> TensorId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        TensorId(self.nodes.len() - 1)
    }

    fn requires(&self, id: TensorId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn ensure_finite(&self, op: &'static str, ids: &[TensorId]) -> Result<(), NumericsError> {
        if self.check_finite {
            for id in ids {
                if !self.nodes[id.0].value.is_finite() {
                    return Err(NumericsError::NonFinite { op });
                }
            }
        }
        Ok(())
    }

    // ------------------------------------------------------------------
    // forward operations
    // ------------------------------------------------------------------

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, NumericsError> {
        self.ensure_finite("matmul", &[a, b])?;
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if ac != br {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul",
                lhs: (ar, ac),
                rhs: (br, bc),
            });
        }
        let value = self.nodes[a.0].value.matmul(&self.nodes[b.0].value);
        let req = self.requires(a) || self.requires(b);
        Ok(self.push(value, Op::MatMul(a, b), req))
    }

    /// Fixed sparse matrix times dense tape tensor.
    pub fn spmm(&mut self, mat: &Rc<SparseMatrix>, rhs: TensorId) -> Result<TensorId, NumericsError> {
        self.ensure_finite("spmm", &[rhs])?;
        let (rr, rc) = self.shape(rhs);
        if mat.cols() != rr {
            return Err(NumericsError::ShapeMismatch {
                op: "spmm",
                lhs: (mat.rows(), mat.cols()),
                rhs: (rr, rc),
            });
        }
        let value = mat.mul_dense(&self.nodes[rhs.0].value);
        let req = self.requires(rhs);
        Ok(self.push(
            value,
            Op::SpMm {
                mat: Rc::clone(mat),
                rhs,
            },
            req,
        ))
    }

    /// Sparse aggregation with learnable per-entry weights (one weight per
    /// adjacency entry, shape nnz x 1): out[i,:] = Σ_k w[k] * rhs[col(k),:].
    pub fn edge_weighted_spmm(
        &mut self,
        adj: &Rc<CsrStructure>,
        weights: TensorId,
        rhs: TensorId,
    ) -> Result<TensorId, NumericsError> {
        self.ensure_finite("edge_weighted_spmm", &[weights, rhs])?;
        let (wr, wc) = self.shape(weights);
        let (rr, rc) = self.shape(rhs);
        if wr != adj.nnz() || wc != 1 {
            return Err(NumericsError::ShapeMismatch {
                op: "edge_weighted_spmm",
                lhs: (adj.nnz(), 1),
                rhs: (wr, wc),
            });
        }
        if rr != adj.n() {
            return Err(NumericsError::ShapeMismatch {
                op: "edge_weighted_spmm",
                lhs: (adj.n(), adj.n()),
                rhs: (rr, rc),
            });
        }
        let w = &self.nodes[weights.0].value;
        let x = &self.nodes[rhs.0].value;
        let mut out = Matrix::zeros(adj.n(), rc);
        for i in 0..adj.n() {
            for k in adj.offsets()[i]..adj.offsets()[i + 1] {
                let coeff = w.get(k, 0);
                let src_row = adj.cols()[k];
                for c in 0..rc {
                    let v = out.get(i, c) + coeff * x.get(src_row, c);
                    out.set(i, c, v);
                }
            }
        }
        let req = self.requires(weights) || self.requires(rhs);
        Ok(self.push(
            out,
            Op::EdgeWeightedSpMm {
                adj: Rc::clone(adj),
                weights,
                rhs,
            },
            req,
        ))
    }

    /// Elementwise add; also accepts a 1 x c right operand broadcast over rows.
    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, NumericsError> {
        self.ensure_finite("add", &[a, b])?;
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        let req = self.requires(a) || self.requires(b);
        if (ar, ac) == (br, bc) {
            let mut value = self.nodes[a.0].value.clone();
            value.add_scaled(&self.nodes[b.0].value, 1.0);
            Ok(self.push(value, Op::Add(a, b), req))
        } else if br == 1 && bc == ac {
            let bias = &self.nodes[b.0].value;
            let mut value = self.nodes[a.0].value.clone();
            for r in 0..ar {
                for c in 0..ac {
                    let v = value.get(r, c) + bias.get(0, c);
                    value.set(r, c, v);
                }
            }
            Ok(self.push(value, Op::AddRow(a, b), req))
        } else {
            Err(NumericsError::ShapeMismatch {
                op: "add",
                lhs: (ar, ac),
                rhs: (br, bc),
            })
        }
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, NumericsError> {
        self.ensure_finite("mul", &[a, b])?;
        if self.shape(a) != self.shape(b) {
            return Err(NumericsError::ShapeMismatch {
                op: "mul",
                lhs: self.shape(a),
                rhs: self.shape(b),
            });
        }
        let (r, c) = self.shape(a);
        let mut value = Matrix::zeros(r, c);
        for (out, (x, y)) in value.data_mut().iter_mut().zip(
            self.nodes[a.0]
                .value
                .data()
                .iter()
                .zip(self.nodes[b.0].value.data()),
        ) {
            *out = x * y;
        }
        let req = self.requires(a) || self.requires(b);
        Ok(self.push(value, Op::Mul(a, b), req))
    }

    pub fn concat_cols(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, NumericsError> {
        self.ensure_finite("concat_cols", &[a, b])?;
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if ar != br {
            return Err(NumericsError::ShapeMismatch {
                op: "concat_cols",
                lhs: (ar, ac),
                rhs: (br, bc),
            });
        }
        let mut value = Matrix::zeros(ar, ac + bc);
        for r in 0..ar {
            value.row_mut(r)[..ac].copy_from_slice(self.nodes[a.0].value.row(r));
            value.row_mut(r)[ac..].copy_from_slice(self.nodes[b.0].value.row(r));
        }
        let req = self.requires(a) || self.requires(b);
        Ok(self.push(value, Op::ConcatCols(a, b), req))
    }

    pub fn relu(&mut self, x: TensorId) -> Result<TensorId, NumericsError> {
        self.ensure_finite("relu", &[x])?;
        let value = self.nodes[x.0].value.map(|v| v.max(0.0));
        let req = self.requires(x);
        Ok(self.push(value, Op::Relu(x), req))
    }

    pub fn leaky_relu(&mut self, x: TensorId, slope: f64) -> Result<TensorId, NumericsError> {
        self.ensure_finite("leaky_relu", &[x])?;
        let value = self.nodes[x.0]
            .value
            .map(|v| if v > 0.0 { v } else { slope * v });
        let req = self.requires(x);
        Ok(self.push(value, Op::LeakyRelu(x, slope), req))
    }

    pub fn sigmoid(&mut self, x: TensorId) -> Result<TensorId, NumericsError> {
        self.ensure_finite("sigmoid", &[x])?;
        let value = self.nodes[x.0].value.map(stable_sigmoid);
        let req = self.requires(x);
        Ok(self.push(value, Op::Sigmoid(x), req))
    }

    pub fn activation(&mut self, x: TensorId, act: Activation) -> Result<TensorId, NumericsError> {
        match act {
            Activation::None => Ok(x),
            Activation::Relu => self.relu(x),
            Activation::LeakyRelu(slope) => self.leaky_relu(x, slope),
        }
    }

    pub fn row_softmax(&mut self, x: TensorId) -> Result<TensorId, NumericsError> {
        self.ensure_finite("row_softmax", &[x])?;
        let input = &self.nodes[x.0].value;
        let (r, c) = input.shape();
        let mut value = Matrix::zeros(r, c);
        for row in 0..r {
            softmax_into(input.row(row), value.row_mut(row));
        }
        let req = self.requires(x);
        Ok(self.push(value, Op::RowSoftmax(x), req))
    }

    /// Softmax over contiguous segments of a column vector. `offsets` has one
    /// more entry than there are segments and must cover the whole column.
    pub fn segment_softmax(
        &mut self,
        x: TensorId,
        offsets: &Rc<Vec<usize>>,
    ) -> Result<TensorId, NumericsError> {
        self.ensure_finite("segment_softmax", &[x])?;
        let (r, c) = self.shape(x);
        if c != 1 || offsets.last().copied() != Some(r) || offsets.first().copied() != Some(0) {
            return Err(NumericsError::ShapeMismatch {
                op: "segment_softmax",
                lhs: (r, c),
                rhs: (offsets.last().copied().unwrap_or(0), 1),
            });
        }
        let input = &self.nodes[x.0].value;
        let mut value = Matrix::zeros(r, 1);
        for seg in offsets.windows(2) {
            let (start, end) = (seg[0], seg[1]);
            if start == end {
                continue;
            }
            let column: Vec<f64> = (start..end).map(|i| input.get(i, 0)).collect();
            let mut out = vec![0.0; column.len()];
            softmax_into(&column, &mut out);
            for (i, v) in out.into_iter().enumerate() {
                value.set(start + i, 0, v);
            }
        }
        let req = self.requires(x);
        Ok(self.push(
            value,
            Op::SegmentSoftmax {
                input: x,
                offsets: Rc::clone(offsets),
            },
            req,
        ))
    }

    /// Column means, producing a 1 x c row.
    pub fn mean_rows(&mut self, x: TensorId) -> Result<TensorId, NumericsError> {
        self.ensure_finite("mean_rows", &[x])?;
        let (r, c) = self.shape(x);
        if r == 0 {
            return Err(NumericsError::EmptyBatch { op: "mean_rows" });
        }
        let input = &self.nodes[x.0].value;
        let mut value = Matrix::zeros(1, c);
        for row in 0..r {
            for col in 0..c {
                let v = value.get(0, col) + input.get(row, col) / r as f64;
                value.set(0, col, v);
            }
        }
        let req = self.requires(x);
        Ok(self.push(value, Op::MeanRows(x), req))
    }

    /// Select rows by index (repeats allowed). Backward scatter-adds.
    pub fn gather_rows(
        &mut self,
        x: TensorId,
        indices: &Rc<Vec<usize>>,
    ) -> Result<TensorId, NumericsError> {
        self.ensure_finite("gather_rows", &[x])?;
        let (r, c) = self.shape(x);
        if let Some(&bad) = indices.iter().find(|&&i| i >= r) {
            return Err(NumericsError::IndexOutOfRange {
                op: "gather_rows",
                index: bad,
                len: r,
            });
        }
        let input = &self.nodes[x.0].value;
        let mut value = Matrix::zeros(indices.len(), c);
        for (out_row, &src) in indices.iter().enumerate() {
            value.row_mut(out_row).copy_from_slice(input.row(src));
        }
        let req = self.requires(x);
        Ok(self.push(
            value,
            Op::GatherRows {
                input: x,
                indices: Rc::clone(indices),
            },
            req,
        ))
    }

    pub fn sum_all(&mut self, x: TensorId) -> Result<TensorId, NumericsError> {
        self.ensure_finite("sum_all", &[x])?;
        let total: f64 = self.nodes[x.0].value.data().iter().sum();
        let req = self.requires(x);
        Ok(self.push(Matrix::scalar(total), Op::SumAll(x), req))
    }

    /// Mean binary cross entropy over an n x 1 logit column, in logit space.
    pub fn bce_with_logits(
        &mut self,
        logits: TensorId,
        targets: &Rc<Vec<f64>>,
    ) -> Result<TensorId, NumericsError> {
        self.ensure_finite("bce_with_logits", &[logits])?;
        let (r, c) = self.shape(logits);
        if r == 0 {
            return Err(NumericsError::EmptyBatch {
                op: "bce_with_logits",
            });
        }
        if c != 1 || targets.len() != r {
            return Err(NumericsError::ShapeMismatch {
                op: "bce_with_logits",
                lhs: (r, c),
                rhs: (targets.len(), 1),
            });
        }
        let input = &self.nodes[logits.0].value;
        let mut total = 0.0;
        for (i, &y) in targets.iter().enumerate() {
            let z = input.get(i, 0);
            // max(z,0) - z*y + ln(1 + exp(-|z|)): stable for large |z|
            total += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
        }
        let req = self.requires(logits);
        Ok(self.push(
            Matrix::scalar(total / r as f64),
            Op::BceWithLogits {
                logits,
                targets: Rc::clone(targets),
            },
            req,
        ))
    }

    /// Mean cross entropy of an n x C logit matrix against class indices.
    pub fn cross_entropy(
        &mut self,
        logits: TensorId,
        classes: &Rc<Vec<usize>>,
    ) -> Result<TensorId, NumericsError> {
        self.ensure_finite("cross_entropy", &[logits])?;
        let (r, c) = self.shape(logits);
        if r == 0 {
            return Err(NumericsError::EmptyBatch { op: "cross_entropy" });
        }
        if classes.len() != r {
            return Err(NumericsError::ShapeMismatch {
                op: "cross_entropy",
                lhs: (r, c),
                rhs: (classes.len(), 1),
            });
        }
        if let Some(&bad) = classes.iter().find(|&&k| k >= c) {
            return Err(NumericsError::IndexOutOfRange {
                op: "cross_entropy",
                index: bad,
                len: c,
            });
        }
        let input = &self.nodes[logits.0].value;
        let mut total = 0.0;
        for (i, &k) in classes.iter().enumerate() {
            let row = input.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            total += lse - row[k];
        }
        let req = self.requires(logits);
        Ok(self.push(
            Matrix::scalar(total / r as f64),
            Op::CrossEntropy {
                logits,
                classes: Rc::clone(classes),
            },
            req,
        ))
    }

    pub fn loss(
        &mut self,
        kind: LossKind,
        logits: TensorId,
        binary_targets: Option<&Rc<Vec<f64>>>,
        classes: Option<&Rc<Vec<usize>>>,
    ) -> Result<TensorId, NumericsError> {
        match kind {
            LossKind::BceWithLogits => self.bce_with_logits(
                logits,
                binary_targets.expect("bce loss needs binary targets"),
            ),
            LossKind::CrossEntropy => {
                self.cross_entropy(logits, classes.expect("cross entropy needs class indices"))
            }
        }
    }

    // ------------------------------------------------------------------
    // backward
    // ------------------------------------------------------------------

    /// Populate gradients of every parameter reachable from `loss`.
    pub fn backward(&mut self, loss: TensorId) -> Result<(), NumericsError> {
        let (r, c) = self.shape(loss);
        if (r, c) != (1, 1) {
            return Err(NumericsError::NonScalarLoss { rows: r, cols: c });
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(Matrix::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(grad) = self.grads[i].take() else {
                continue;
            };
            self.propagate(i, &grad);
            self.grads[i] = Some(grad);
        }
        Ok(())
    }

    fn accumulate(&mut self, target: TensorId, delta: Matrix) {
        if !self.requires(target) {
            return;
        }
        match &mut self.grads[target.0] {
            Some(g) => g.add_scaled(&delta, 1.0),
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&mut self, index: usize, grad: &Matrix) {
        // The op is moved out temporarily to appease the borrow checker.
        let op = std::mem::replace(&mut self.nodes[index].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.requires(*a) {
                    let delta = grad.matmul_nt(&self.nodes[b.0].value);
                    self.accumulate(*a, delta);
                }
                if self.requires(*b) {
                    let delta = self.nodes[a.0].value.matmul_tn(grad);
                    self.accumulate(*b, delta);
                }
            }
            Op::SpMm { mat, rhs } => {
                if self.requires(*rhs) {
                    self.accumulate(*rhs, mat.transpose_mul_dense(grad));
                }
            }
            Op::EdgeWeightedSpMm { adj, weights, rhs } => {
                let cols = self.nodes[rhs.0].value.cols();
                if self.requires(*weights) {
                    let mut gw = Matrix::zeros(adj.nnz(), 1);
                    let x = &self.nodes[rhs.0].value;
                    for i in 0..adj.n() {
                        for k in adj.offsets()[i]..adj.offsets()[i + 1] {
                            let src = adj.cols()[k];
                            let mut acc = 0.0;
                            for c in 0..cols {
                                acc += grad.get(i, c) * x.get(src, c);
                            }
                            gw.set(k, 0, acc);
                        }
                    }
                    self.accumulate(*weights, gw);
                }
                if self.requires(*rhs) {
                    let w = &self.nodes[weights.0].value;
                    let mut gx = Matrix::zeros(adj.n(), cols);
                    for i in 0..adj.n() {
                        for k in adj.offsets()[i]..adj.offsets()[i + 1] {
                            let src = adj.cols()[k];
                            let coeff = w.get(k, 0);
                            for c in 0..cols {
                                let v = gx.get(src, c) + coeff * grad.get(i, c);
                                gx.set(src, c, v);
                            }
                        }
                    }
                    self.accumulate(*rhs, gx);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(*a, grad.clone());
                self.accumulate(*b, grad.clone());
            }
            Op::AddRow(a, b) => {
                self.accumulate(*a, grad.clone());
                if self.requires(*b) {
                    let mut gb = Matrix::zeros(1, grad.cols());
                    for r in 0..grad.rows() {
                        for c in 0..grad.cols() {
                            let v = gb.get(0, c) + grad.get(r, c);
                            gb.set(0, c, v);
                        }
                    }
                    self.accumulate(*b, gb);
                }
            }
            Op::Mul(a, b) => {
                if self.requires(*a) {
                    let mut delta = grad.clone();
                    for (d, v) in delta.data_mut().iter_mut().zip(self.nodes[b.0].value.data()) {
                        *d *= v;
                    }
                    self.accumulate(*a, delta);
                }
                if self.requires(*b) {
                    let mut delta = grad.clone();
                    for (d, v) in delta.data_mut().iter_mut().zip(self.nodes[a.0].value.data()) {
                        *d *= v;
                    }
                    self.accumulate(*b, delta);
                }
            }
            Op::ConcatCols(a, b) => {
                let ac = self.nodes[a.0].value.cols();
                if self.requires(*a) {
                    let mut ga = Matrix::zeros(grad.rows(), ac);
                    for r in 0..grad.rows() {
                        ga.row_mut(r).copy_from_slice(&grad.row(r)[..ac]);
                    }
                    self.accumulate(*a, ga);
                }
                if self.requires(*b) {
                    let bc = grad.cols() - ac;
                    let mut gb = Matrix::zeros(grad.rows(), bc);
                    for r in 0..grad.rows() {
                        gb.row_mut(r).copy_from_slice(&grad.row(r)[ac..]);
                    }
                    self.accumulate(*b, gb);
                }
            }
            Op::Relu(x) => {
                if self.requires(*x) {
                    let mut delta = grad.clone();
                    for (d, v) in delta.data_mut().iter_mut().zip(self.nodes[x.0].value.data()) {
                        if *v <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    self.accumulate(*x, delta);
                }
            }
            Op::LeakyRelu(x, slope) => {
                if self.requires(*x) {
                    let mut delta = grad.clone();
                    for (d, v) in delta.data_mut().iter_mut().zip(self.nodes[x.0].value.data()) {
                        if *v <= 0.0 {
                            *d *= slope;
                        }
                    }
                    self.accumulate(*x, delta);
                }
            }
            Op::Sigmoid(x) => {
                if self.requires(*x) {
                    let out = &self.nodes[index].value;
                    let mut delta = grad.clone();
                    for (d, s) in delta.data_mut().iter_mut().zip(out.data()) {
                        *d *= s * (1.0 - s);
                    }
                    self.accumulate(*x, delta);
                }
            }
            Op::RowSoftmax(x) => {
                if self.requires(*x) {
                    let out = &self.nodes[index].value;
                    let mut delta = Matrix::zeros(out.rows(), out.cols());
                    for r in 0..out.rows() {
                        let dot: f64 = out
                            .row(r)
                            .iter()
                            .zip(grad.row(r))
                            .map(|(y, g)| y * g)
                            .sum();
                        for c in 0..out.cols() {
                            delta.set(r, c, out.get(r, c) * (grad.get(r, c) - dot));
                        }
                    }
                    self.accumulate(*x, delta);
                }
            }
            Op::SegmentSoftmax { input, offsets } => {
                if self.requires(*input) {
                    let out = &self.nodes[index].value;
                    let mut delta = Matrix::zeros(out.rows(), 1);
                    for seg in offsets.windows(2) {
                        let dot: f64 = (seg[0]..seg[1])
                            .map(|i| out.get(i, 0) * grad.get(i, 0))
                            .sum();
                        for i in seg[0]..seg[1] {
                            delta.set(i, 0, out.get(i, 0) * (grad.get(i, 0) - dot));
                        }
                    }
                    self.accumulate(*input, delta);
                }
            }
            Op::MeanRows(x) => {
                if self.requires(*x) {
                    let (r, c) = self.nodes[x.0].value.shape();
                    let mut delta = Matrix::zeros(r, c);
                    for row in 0..r {
                        for col in 0..c {
                            delta.set(row, col, grad.get(0, col) / r as f64);
                        }
                    }
                    self.accumulate(*x, delta);
                }
            }
            Op::GatherRows { input, indices } => {
                if self.requires(*input) {
                    let (r, c) = self.nodes[input.0].value.shape();
                    let mut delta = Matrix::zeros(r, c);
                    for (out_row, &src) in indices.iter().enumerate() {
                        for col in 0..c {
                            let v = delta.get(src, col) + grad.get(out_row, col);
                            delta.set(src, col, v);
                        }
                    }
                    self.accumulate(*input, delta);
                }
            }
            Op::SumAll(x) => {
                if self.requires(*x) {
                    let (r, c) = self.nodes[x.0].value.shape();
                    self.accumulate(*x, Matrix::filled(r, c, grad.get(0, 0)));
                }
            }
            Op::BceWithLogits { logits, targets } => {
                if self.requires(*logits) {
                    let z = &self.nodes[logits.0].value;
                    let n = targets.len() as f64;
                    let scale = grad.get(0, 0) / n;
                    let mut delta = Matrix::zeros(targets.len(), 1);
                    for (i, &y) in targets.iter().enumerate() {
                        delta.set(i, 0, scale * (stable_sigmoid(z.get(i, 0)) - y));
                    }
                    self.accumulate(*logits, delta);
                }
            }
            Op::CrossEntropy { logits, classes } => {
                if self.requires(*logits) {
                    let z = &self.nodes[logits.0].value;
                    let (r, c) = z.shape();
                    let scale = grad.get(0, 0) / r as f64;
                    let mut delta = Matrix::zeros(r, c);
                    for (i, &k) in classes.iter().enumerate() {
                        let mut probs = vec![0.0; c];
                        softmax_into(z.row(i), &mut probs);
                        for (j, p) in probs.into_iter().enumerate() {
                            let indicator = if j == k { 1.0 } else { 0.0 };
                            delta.set(i, j, scale * (p - indicator));
                        }
                    }
                    self.accumulate(*logits, delta);
                }
            }
        }
        self.nodes[index].op = op;
    }
}

fn stable_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softmax_into(input: &[f64], out: &mut [f64]) {
    let max = input.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(input) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity_passthrough() {
        let mut tape = Tape::new();
        let i = tape.leaf(Matrix::identity(3));
        let x = tape.leaf(Matrix::from_rows(&[
            vec![1.0, 2.0],
            vec![3.0, 4.0],
            vec![5.0, 6.0],
        ]));
        let y = tape.matmul(i, x).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
    }

    #[test]
    fn matmul_shape_mismatch() {
        let mut tape = Tape::new();
        let a = tape.leaf(Matrix::zeros(2, 3));
        let b = tape.leaf(Matrix::zeros(2, 3));
        assert!(matches!(
            tape.matmul(a, b),
            Err(NumericsError::ShapeMismatch { op: "matmul", .. })
        ));
    }

    #[test]
    fn relu_forward_and_backward() {
        let mut tape = Tape::new();
        let x = tape.param(Matrix::from_vec(1, 2, vec![-1.0, 2.0]));
        let y = tape.relu(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 2.0]);
        let s = tape.sum_all(y).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::zeros(1, 3));
        let y = tape.row_softmax(x).unwrap();
        for v in tape.value(y).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::from_rows(&[
            vec![10.0, -3.0, 0.5, 700.0],
            vec![-700.0, 0.0, 1.0, 2.0],
        ]));
        let y = tape.row_softmax(x).unwrap();
        for r in 0..2 {
            let sum: f64 = tape.value(y).row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bce_analytic_values() {
        let mut tape = Tape::new();
        let z = tape.leaf(Matrix::scalar(0.0));
        let loss = tape.bce_with_logits(z, &Rc::new(vec![1.0])).unwrap();
        assert!((tape.value(loss).get(0, 0) - std::f64::consts::LN_2).abs() < 1e-12);

        let big = tape.leaf(Matrix::scalar(20.0));
        let loss = tape.bce_with_logits(big, &Rc::new(vec![1.0])).unwrap();
        let v = tape.value(loss).get(0, 0);
        assert!(v.is_finite() && v >= 0.0 && v < 1e-8, "got {v}");

        // Stability: huge logits must not overflow.
        let huge = tape.leaf(Matrix::from_vec(2, 1, vec![5000.0, -5000.0]));
        let loss = tape
            .bce_with_logits(huge, &Rc::new(vec![1.0, 0.0]))
            .unwrap();
        assert!(tape.value(loss).get(0, 0).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_analytic_values() {
        let mut tape = Tape::new();
        let z = tape.leaf(Matrix::zeros(1, 6));
        let loss = tape.cross_entropy(z, &Rc::new(vec![3])).unwrap();
        assert!((tape.value(loss).get(0, 0) - 6f64.ln()).abs() < 1e-12);

        // Near-perfect prediction: probability within 1e-12 of 1.
        let mut confident = Matrix::zeros(1, 4);
        confident.set(0, 2, 40.0);
        let z = tape.leaf(confident);
        let loss = tape.cross_entropy(z, &Rc::new(vec![2])).unwrap();
        assert!(tape.value(loss).get(0, 0) < 1e-9);
    }

    #[test]
    fn losses_reject_empty_batches() {
        let mut tape = Tape::new();
        let z = tape.leaf(Matrix::zeros(0, 1));
        assert!(matches!(
            tape.bce_with_logits(z, &Rc::new(Vec::new())),
            Err(NumericsError::EmptyBatch { .. })
        ));
        let z = tape.leaf(Matrix::zeros(0, 3));
        assert!(matches!(
            tape.cross_entropy(z, &Rc::new(Vec::new())),
            Err(NumericsError::EmptyBatch { .. })
        ));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let x = tape.param(Matrix::zeros(2, 2));
        assert!(matches!(
            tape.backward(x),
            Err(NumericsError::NonScalarLoss { rows: 2, cols: 2 })
        ));
    }

    #[test]
    fn sum_of_squares_gradient() {
        // loss = sum(x*x), x = [3] -> dloss/dx = 6
        let mut tape = Tape::new();
        let x = tape.param(Matrix::scalar(3.0));
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum_all(sq).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap().get(0, 0), 6.0);
    }

    #[test]
    fn unused_parameter_keeps_zero_grad() {
        let mut tape = Tape::new();
        let used = tape.param(Matrix::scalar(2.0));
        let unused = tape.param(Matrix::scalar(5.0));
        let loss = tape.mul(used, used).unwrap();
        tape.backward(loss).unwrap();
        assert!(tape.grad(unused).is_none());
        assert_eq!(tape.grad_or_zeros(unused).data(), &[0.0]);
    }

    #[test]
    fn segment_softmax_sums_per_segment() {
        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::from_vec(5, 1, vec![1.0, 2.0, -1.0, 0.0, 3.0]));
        let offsets = Rc::new(vec![0usize, 2, 2, 5]);
        let y = tape.segment_softmax(x, &offsets).unwrap();
        let v = tape.value(y);
        assert!((v.get(0, 0) + v.get(1, 0) - 1.0).abs() < 1e-12);
        assert!((v.get(2, 0) + v.get(3, 0) + v.get(4, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gather_rows_out_of_range() {
        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::zeros(2, 2));
        assert!(matches!(
            tape.gather_rows(x, &Rc::new(vec![0, 2])),
            Err(NumericsError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn finite_check_catches_nan() {
        let mut tape = Tape::with_finite_checks();
        let x = tape.leaf(Matrix::scalar(f64::NAN));
        assert!(matches!(
            tape.relu(x),
            Err(NumericsError::NonFinite { op: "relu" })
        ));
    }

    #[test]
    fn add_broadcasts_bias_row() {
        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let b = tape.leaf(Matrix::from_vec(1, 2, vec![10.0, 20.0]));
        let y = tape.add(x, b).unwrap();
        assert_eq!(tape.value(y).data(), &[11.0, 22.0, 13.0, 24.0]);
    }

    #[test]
    fn mean_rows_value() {
        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::from_rows(&[vec![1.0, 0.0], vec![3.0, 2.0]]));
        let y = tape.mean_rows(x).unwrap();
        assert_eq!(tape.value(y).data(), &[2.0, 1.0]);
    }
}
