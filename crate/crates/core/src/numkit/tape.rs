//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Calling
//! [`Tape::backward`] on a scalar node replays the record in reverse and
//! returns exact gradients for every parameter of the [`ParamStore`] the
//! forward pass read from. Parameters the loss never touched receive zero
//! matrices.
//!
//! [`Tape::reverse_gradient`] inserts an identity node whose backward edge is
//! multiplied by a constant. With a multiplier of `-lambda` this is the
//! gradient-reversal layer of domain-adversarial training; with `1.0` it is a
//! plain identity, which is how the finite-difference checks see it.

use std::rc::Rc;

use rand::Rng;

use super::{Matrix, ParamId, ParamStore, SparseMatrix};
use crate::error::{Error, Result};
use crate::numkit::matrix::sigmoid;

/// Node handle on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Hadamard(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Mask(Var, Matrix),
    ConcatCols(Var, Var),
    Gather(Var, Rc<Vec<usize>>),
    Sparse(Rc<SparseMatrix>, Var),
    RowSum(Var),
    Sum(Var),
    ReverseGrad(Var, f64),
    SoftmaxCe(Var, Rc<Vec<usize>>),
    BceLogits(Var, Rc<Matrix>),
    Mse(Var, Rc<Matrix>),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Record of one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients aligned with the parameters of a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    grads: Vec<Matrix>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Gradients {
            grads: store
                .iter()
                .map(|(_, _, m)| Matrix::zeros(m.rows(), m.cols()))
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.grads[id.0]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Matrix)> {
        self.grads.iter().enumerate().map(|(i, g)| (ParamId(i), g))
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(Matrix::is_finite)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.get(0, 0)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.get(id).clone(), Op::Param(id), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    /// Adds a `1 x cols` bias row to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let value = self.value(x).add_row(self.value(bias))?;
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(value, Op::AddRow(x, bias), rg))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hadamard(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Hadamard(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let value = self.value(x).scale(s);
        let rg = self.rg(x);
        self.push(value, Op::Scale(x, s), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        let rg = self.rg(x);
        self.push(value, Op::Relu(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(sigmoid);
        let rg = self.rg(x);
        self.push(value, Op::Sigmoid(x), rg)
    }

    /// Inverted dropout. Identity when `train` is false or `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        p: f64,
        train: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::config(format!("dropout probability {p} outside [0, 1)")));
        }
        if !train || p == 0.0 {
            return Ok(x);
        }
        let (rows, cols) = self.value(x).shape();
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..rows * cols)
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        let mask = Matrix::from_vec(rows, cols, mask)?;
        let value = self.value(x).hadamard(&mask)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Mask(x, mask), rg))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).concat_cols(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::ConcatCols(a, b), rg))
    }

    pub fn gather_rows(&mut self, x: Var, indices: Rc<Vec<usize>>) -> Result<Var> {
        let value = self.value(x).gather_rows(&indices)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Gather(x, indices), rg))
    }

    /// `adjacency * x` for a fixed sparse matrix.
    pub fn sparse_mul(&mut self, adjacency: Rc<SparseMatrix>, x: Var) -> Result<Var> {
        let value = adjacency.mul_dense(self.value(x))?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Sparse(adjacency, x), rg))
    }

    /// Sum of each row, as an `n x 1` column.
    pub fn row_sum(&mut self, x: Var) -> Var {
        let m = self.value(x);
        let sums: Vec<f64> = (0..m.rows()).map(|r| m.row(r).iter().sum()).collect();
        let value = Matrix::column_vector(&sums);
        let rg = self.rg(x);
        self.push(value, Op::RowSum(x), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Matrix::filled(1, 1, self.value(x).sum());
        let rg = self.rg(x);
        self.push(value, Op::Sum(x), rg)
    }

    /// Identity forward; backward multiplies the incoming gradient by
    /// `multiplier` (use `-lambda` for gradient reversal).
    pub fn reverse_gradient(&mut self, x: Var, multiplier: f64) -> Var {
        let value = self.value(x).clone();
        let rg = self.rg(x);
        self.push(value, Op::ReverseGrad(x, multiplier), rg)
    }

    /// Mean softmax cross-entropy of `logits` (`n x K`) against class indices.
    pub fn softmax_ce(&mut self, logits: Var, labels: Rc<Vec<usize>>) -> Result<Var> {
        let value = softmax_ce_value(self.value(logits), &labels)?;
        let rg = self.rg(logits);
        Ok(self.push(
            Matrix::filled(1, 1, value),
            Op::SoftmaxCe(logits, labels),
            rg,
        ))
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against 0/1 targets.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Rc<Matrix>) -> Result<Var> {
        let value = bce_logits_value(self.value(logits), &targets)?;
        let rg = self.rg(logits);
        Ok(self.push(
            Matrix::filled(1, 1, value),
            Op::BceLogits(logits, targets),
            rg,
        ))
    }

    /// Squared error per row, averaged over rows.
    pub fn mse(&mut self, pred: Var, target: Rc<Matrix>) -> Result<Var> {
        let value = mse_value(self.value(pred), &target)?;
        let rg = self.rg(pred);
        Ok(self.push(Matrix::filled(1, 1, value), Op::Mse(pred, target), rg))
    }

    /// Sign pattern of every ReLU input on the tape. Two forward passes with
    /// equal patterns lie on the same linear piece of the network.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let Op::Relu(x) = node.op {
                out.extend(self.value(x).as_slice().iter().map(|&v| v > 0.0));
            }
        }
        out
    }

    /// Exact gradients of the scalar `loss` with respect to every parameter
    /// in `store`.
    pub fn backward(&self, loss: Var, store: &ParamStore) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got {:?}",
                self.value(loss).shape()
            )));
        }
        let mut out = Gradients::zeros_like(store);
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    let slot = &mut out.grads[id.0];
                    if !slot.same_shape(&g) {
                        return Err(Error::shape(format!(
                            "parameter {} changed shape since the forward pass",
                            store.name(*id)
                        )));
                    }
                    slot.axpy(1.0, &g)?;
                }
                Op::MatMul(a, b) => {
                    if self.rg(*a) {
                        let ga = g.matmul_nt(self.value(*b))?;
                        accumulate(&mut grads, *a, ga)?;
                    }
                    if self.rg(*b) {
                        let gb = self.value(*a).matmul_tn(&g)?;
                        accumulate(&mut grads, *b, gb)?;
                    }
                }
                Op::Add(a, b) => {
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, g.clone())?;
                    }
                    if self.rg(*b) {
                        accumulate(&mut grads, *b, g)?;
                    }
                }
                Op::Sub(a, b) => {
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, g.clone())?;
                    }
                    if self.rg(*b) {
                        accumulate(&mut grads, *b, g.scale(-1.0))?;
                    }
                }
                Op::AddRow(x, bias) => {
                    if self.rg(*bias) {
                        accumulate(&mut grads, *bias, g.sum_rows())?;
                    }
                    if self.rg(*x) {
                        accumulate(&mut grads, *x, g)?;
                    }
                }
                Op::Hadamard(a, b) => {
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, g.hadamard(self.value(*b))?)?;
                    }
                    if self.rg(*b) {
                        accumulate(&mut grads, *b, g.hadamard(self.value(*a))?)?;
                    }
                }
                Op::Scale(x, s) => accumulate(&mut grads, *x, g.scale(*s))?,
                Op::Relu(x) => {
                    let gx = g.zip_map(self.value(*x), |gv, xv| if xv > 0.0 { gv } else { 0.0 })?;
                    accumulate(&mut grads, *x, gx)?;
                }
                Op::Sigmoid(x) => {
                    let gx = g.zip_map(&node.value, |gv, y| gv * y * (1.0 - y))?;
                    accumulate(&mut grads, *x, gx)?;
                }
                Op::Mask(x, mask) => accumulate(&mut grads, *x, g.hadamard(mask)?)?,
                Op::ConcatCols(a, b) => {
                    let split = self.value(*a).cols();
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, g.slice_cols(0, split)?)?;
                    }
                    if self.rg(*b) {
                        accumulate(&mut grads, *b, g.slice_cols(split, g.cols())?)?;
                    }
                }
                Op::Gather(x, indices) => {
                    let src = self.value(*x);
                    let mut gx = Matrix::zeros(src.rows(), src.cols());
                    for (i, &row) in indices.iter().enumerate() {
                        for (o, &v) in gx.row_mut(row).iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads, *x, gx)?;
                }
                Op::Sparse(adj, x) => {
                    accumulate(&mut grads, *x, adj.mul_dense_transposed(&g)?)?;
                }
                Op::RowSum(x) => {
                    let src = self.value(*x);
                    let mut gx = Matrix::zeros(src.rows(), src.cols());
                    for r in 0..src.rows() {
                        let gr = g.get(r, 0);
                        gx.row_mut(r).iter_mut().for_each(|v| *v = gr);
                    }
                    accumulate(&mut grads, *x, gx)?;
                }
                Op::Sum(x) => {
                    let (r, c) = self.value(*x).shape();
                    accumulate(&mut grads, *x, Matrix::filled(r, c, g.get(0, 0)))?;
                }
                Op::ReverseGrad(x, m) => accumulate(&mut grads, *x, g.scale(*m))?,
                Op::SoftmaxCe(logits, labels) => {
                    let z = self.value(*logits);
                    let mut gz = z.softmax_rows();
                    let scale = g.get(0, 0) / z.rows() as f64;
                    for (r, &label) in labels.iter().enumerate() {
                        let row = gz.row_mut(r);
                        row[label] -= 1.0;
                        row.iter_mut().for_each(|v| *v *= scale);
                    }
                    accumulate(&mut grads, *logits, gz)?;
                }
                Op::BceLogits(logits, targets) => {
                    let z = self.value(*logits);
                    let scale = g.get(0, 0) / z.len() as f64;
                    let gz = z.zip_map(targets, |zv, y| (sigmoid(zv) - y) * scale)?;
                    accumulate(&mut grads, *logits, gz)?;
                }
                Op::Mse(pred, target) => {
                    let p = self.value(*pred);
                    let scale = 2.0 * g.get(0, 0) / p.rows() as f64;
                    let gp = p.zip_map(target, |a, b| (a - b) * scale)?;
                    accumulate(&mut grads, *pred, gp)?;
                }
            }
        }
        Ok(out)
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) -> Result<()> {
    match &mut grads[v.0] {
        Some(existing) => existing.axpy(1.0, &g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

pub(crate) fn softmax_ce_value(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    if logits.rows() != labels.len() {
        return Err(Error::shape(format!(
            "softmax_ce: {} logit rows, {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    if logits.rows() == 0 {
        return Err(Error::domain("softmax_ce on an empty batch"));
    }
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        if label >= row.len() {
            return Err(Error::domain(format!(
                "class label {label} outside [0, {})",
                row.len()
            )));
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[label];
    }
    Ok(total / logits.rows() as f64)
}

pub(crate) fn bce_logits_value(logits: &Matrix, targets: &Matrix) -> Result<f64> {
    if !logits.same_shape(targets) {
        return Err(Error::shape(format!(
            "bce: logits {:?} vs targets {:?}",
            logits.shape(),
            targets.shape()
        )));
    }
    if logits.is_empty() {
        return Err(Error::domain("binary cross-entropy on an empty batch"));
    }
    let mut total = 0.0;
    for (&z, &y) in logits.as_slice().iter().zip(targets.as_slice()) {
        if y != 0.0 && y != 1.0 {
            return Err(Error::domain(format!("binary target {y} not in {{0, 1}}")));
        }
        // max(z, 0) - z*y + ln(1 + e^-|z|)
        total += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
    }
    Ok(total / logits.len() as f64)
}

pub(crate) fn mse_value(pred: &Matrix, target: &Matrix) -> Result<f64> {
    if !pred.same_shape(target) {
        return Err(Error::shape(format!(
            "mse: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if pred.rows() == 0 {
        return Err(Error::domain("mse on an empty batch"));
    }
    let sq: f64 = pred
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sq / pred.rows() as f64)
}
