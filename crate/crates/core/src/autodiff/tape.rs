//! Define-by-run reverse-mode tape.
//!
//! Every forward op appends a node holding its value and the indices of its
//! inputs. Because inputs always precede outputs, walking the node list from
//! the loss back to index 0 is a valid reverse topological order, so each
//! reachable node's backward rule runs exactly once and fan-out gradients are
//! summed before they are propagated further.
//!
//! A tape borrows the [`ParamStore`] read-only. Parameter leaves are cached
//! per tape, so a weight used by several posts appears once and collects the
//! sum of all its uses. [`Tape::backward`] consumes the tape and returns a
//! [`Gradients`] set that the caller folds into the store.

use std::collections::HashMap;
use std::sync::Arc;

use super::matrix::dot;
use super::{AutodiffError, Gradients, LinearOperator, Matrix, ParamId, ParamStore};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

/// Lower bound applied to probabilities before taking logs in [`Tape::bce`].
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Gather { param: ParamId, ids: Vec<usize> },
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBiasRow(Var, Var),
    Scale(Var, f64),
    MulScalar(Var, Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    MeanRows(Var),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    SoftmaxRows(Var),
    RowNorm { x: Var, inv_std: Vec<f64> },
    Propagate(Arc<LinearOperator>, Var),
    Sum(Var),
    Bce { probs: Var, targets: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

pub struct Tape<'a> {
    store: Option<&'a ParamStore>,
    nodes: Vec<Node>,
    param_cache: HashMap<ParamId, Var>,
}

fn shape_err(op: &'static str, a: &Matrix, b: &Matrix) -> AutodiffError {
    AutodiffError::Shape {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

impl<'a> Tape<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Self {
            store: Some(store),
            nodes: Vec::new(),
            param_cache: HashMap::new(),
        }
    }

    /// A tape with no parameter store; only leaves can carry gradients.
    pub fn detached() -> Tape<'static> {
        Tape {
            store: None,
            nodes: Vec::new(),
            param_cache: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(
        &mut self,
        name: &'static str,
        value: Matrix,
        op: Op,
        requires_grad: bool,
    ) -> Result<Var, AutodiffError> {
        if !value.is_finite() {
            return Err(AutodiffError::NonFinite { op: name });
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn store(&self) -> Result<&'a ParamStore, AutodiffError> {
        self.store.ok_or(AutodiffError::DetachedTape)
    }

    pub fn constant(&mut self, value: Matrix) -> Result<Var, AutodiffError> {
        self.push("constant", value, Op::Leaf, false)
    }

    /// A free leaf whose gradient is reported through [`Gradients::leaf`].
    pub fn leaf(&mut self, value: Matrix) -> Result<Var, AutodiffError> {
        self.push("leaf", value, Op::Leaf, true)
    }

    pub fn param(&mut self, id: ParamId) -> Result<Var, AutodiffError> {
        if let Some(&v) = self.param_cache.get(&id) {
            return Ok(v);
        }
        let value = self.store()?.value(id).clone();
        let v = self.push("param", value, Op::Param(id), true)?;
        self.param_cache.insert(id, v);
        Ok(v)
    }

    /// Rows `ids` of a parameter table (embedding lookup).
    pub fn gather(&mut self, id: ParamId, ids: &[usize]) -> Result<Var, AutodiffError> {
        let table = self.store()?.value(id);
        if let Some(&bad) = ids.iter().find(|&&i| i >= table.rows()) {
            return Err(AutodiffError::IndexOutOfRange {
                index: bad,
                len: table.rows(),
            });
        }
        let value = table.select_rows(ids);
        self.push(
            "gather",
            value,
            Op::Gather {
                param: id,
                ids: ids.to_vec(),
            },
            true,
        )
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.rows() {
            return Err(shape_err("matmul", va, vb));
        }
        let out = va.matmul(vb);
        let rg = self.rg(a) || self.rg(b);
        self.push("matmul", out, Op::MatMul(a, b), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let out = self.value(a).transpose();
        let rg = self.rg(a);
        self.push("transpose", out, Op::Transpose(a), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err("add", va, vb));
        }
        let mut out = va.clone();
        out.add_assign(vb);
        let rg = self.rg(a) || self.rg(b);
        self.push("add", out, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err("sub", va, vb));
        }
        let mut out = va.clone();
        out.add_scaled(vb, -1.0);
        let rg = self.rg(a) || self.rg(b);
        self.push("sub", out, Op::Sub(a, b), rg)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err("mul", va, vb));
        }
        let mut out = va.clone();
        for (o, v) in out.data_mut().iter_mut().zip(vb.data()) {
            *o *= v;
        }
        let rg = self.rg(a) || self.rg(b);
        self.push("mul", out, Op::Mul(a, b), rg)
    }

    /// `x + 1·bias` where `bias` is a single row broadcast over all rows of `x`.
    pub fn add_bias_row(&mut self, x: Var, bias: Var) -> Result<Var, AutodiffError> {
        let (vx, vb) = (self.value(x), self.value(bias));
        if vb.rows() != 1 || vb.cols() != vx.cols() {
            return Err(shape_err("add_bias_row", vx, vb));
        }
        let mut out = vx.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(vb.data()) {
                *o += b;
            }
        }
        let rg = self.rg(x) || self.rg(bias);
        self.push("add_bias_row", out, Op::AddBiasRow(x, bias), rg)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var, AutodiffError> {
        let out = self.value(x).scale(s);
        let rg = self.rg(x);
        self.push("scale", out, Op::Scale(x, s), rg)
    }

    /// `s * x` for a 1x1 variable `s`.
    pub fn mul_scalar(&mut self, s: Var, x: Var) -> Result<Var, AutodiffError> {
        let (vs, vx) = (self.value(s), self.value(x));
        if vs.shape() != (1, 1) {
            return Err(shape_err("mul_scalar", vs, vx));
        }
        let out = vx.scale(vs.item());
        let rg = self.rg(s) || self.rg(x);
        self.push("mul_scalar", out, Op::MulScalar(s, x), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let first = *parts.first().ok_or(AutodiffError::EmptyInput {
            op: "concat_cols",
        })?;
        let rows = self.value(first).rows();
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(shape_err("concat_cols", self.value(first), self.value(p)));
            }
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                out.row_mut(r)[offset..offset + src.len()].copy_from_slice(src);
                offset += src.len();
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push("concat_cols", out, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let first = *parts.first().ok_or(AutodiffError::EmptyInput {
            op: "concat_rows",
        })?;
        let cols = self.value(first).cols();
        for &p in parts {
            if self.value(p).cols() != cols {
                return Err(shape_err("concat_rows", self.value(first), self.value(p)));
            }
        }
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Matrix::vstack(&mats);
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push("concat_rows", out, Op::ConcatRows(parts.to_vec()), rg)
    }

    /// Column means over the true row count, as a 1xn row.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let vx = self.value(x);
        if vx.rows() == 0 {
            return Err(AutodiffError::EmptyInput { op: "mean_rows" });
        }
        let mut out = Matrix::zeros(1, vx.cols());
        for r in 0..vx.rows() {
            for (o, v) in out.data_mut().iter_mut().zip(vx.row(r)) {
                *o += v;
            }
        }
        let inv = 1.0 / vx.rows() as f64;
        for o in out.data_mut() {
            *o *= inv;
        }
        let rg = self.rg(x);
        self.push("mean_rows", out, Op::MeanRows(x), rg)
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var, AutodiffError> {
        let vx = self.value(x);
        if start + len > vx.rows() {
            return Err(AutodiffError::IndexOutOfRange {
                index: start + len,
                len: vx.rows(),
            });
        }
        let ids: Vec<usize> = (start..start + len).collect();
        let out = vx.select_rows(&ids);
        let rg = self.rg(x);
        self.push("slice_rows", out, Op::SliceRows(x, start), rg)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, AutodiffError> {
        let vx = self.value(x);
        if start + len > vx.cols() {
            return Err(AutodiffError::IndexOutOfRange {
                index: start + len,
                len: vx.cols(),
            });
        }
        let mut out = Matrix::zeros(vx.rows(), len);
        for r in 0..vx.rows() {
            out.row_mut(r)
                .copy_from_slice(&vx.row(r)[start..start + len]);
        }
        let rg = self.rg(x);
        self.push("slice_cols", out, Op::SliceCols(x, start), rg)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var, AutodiffError> {
        let out = self
            .value(x)
            .map(|v| if v >= 0.0 { v } else { slope * v });
        let rg = self.rg(x);
        self.push("leaky_relu", out, Op::LeakyRelu(x, slope), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let out = self.value(x).map(stable_sigmoid);
        let rg = self.rg(x);
        self.push("sigmoid", out, Op::Sigmoid(x), rg)
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let vx = self.value(x);
        let mut out = vx.clone();
        for r in 0..out.rows() {
            softmax_in_place(out.row_mut(r));
        }
        let rg = self.rg(x);
        self.push("softmax_rows", out, Op::SoftmaxRows(x), rg)
    }

    /// Normalizes each row to zero mean and unit variance (no affine terms).
    pub fn row_norm(&mut self, x: Var, eps: f64) -> Result<Var, AutodiffError> {
        let vx = self.value(x);
        let n = vx.cols() as f64;
        let mut out = vx.clone();
        let mut inv_std = Vec::with_capacity(vx.rows());
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + eps).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * is;
            }
            inv_std.push(is);
        }
        let rg = self.rg(x);
        self.push("row_norm", out, Op::RowNorm { x, inv_std }, rg)
    }

    /// `op * x` for a constant operator such as a normalized adjacency.
    pub fn propagate(
        &mut self,
        op: Arc<LinearOperator>,
        x: Var,
    ) -> Result<Var, AutodiffError> {
        let vx = self.value(x);
        let (r, c) = op.shape();
        if c != vx.rows() {
            return Err(AutodiffError::Shape {
                op: "propagate",
                left: (r, c),
                right: vx.shape(),
            });
        }
        let out = op.apply(vx);
        let rg = self.rg(x);
        self.push("propagate", out, Op::Propagate(op, x), rg)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let out = Matrix::scalar(self.value(x).sum());
        let rg = self.rg(x);
        self.push("sum", out, Op::Sum(x), rg)
    }

    /// Summed binary cross-entropy of a 1xT probability row against 0/1 targets.
    /// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` first.
    pub fn bce(&mut self, probs: Var, targets: &[f64]) -> Result<Var, AutodiffError> {
        let vp = self.value(probs);
        if vp.rows() != 1 || vp.cols() != targets.len() {
            return Err(AutodiffError::Shape {
                op: "bce",
                left: vp.shape(),
                right: (1, targets.len()),
            });
        }
        let loss = bce_value(vp.data(), targets);
        let rg = self.rg(probs);
        self.push(
            "bce",
            Matrix::scalar(loss),
            Op::Bce {
                probs,
                targets: targets.to_vec(),
            },
            rg,
        )
    }

    /// Runs reverse accumulation from a 1x1 `loss` and consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients, AutodiffError> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(AutodiffError::NonScalarLoss(shape));
        }
        let Tape { store, nodes, .. } = self;
        let mut grads: Vec<Option<Matrix>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Matrix::scalar(1.0));
        let mut out = Gradients::default();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            if !node.requires_grad {
                continue;
            }
            out.visited += 1;
            let val = |v: Var| &nodes[v.0].value;
            let wants = |v: Var| nodes[v.0].requires_grad;
            match &node.op {
                Op::Leaf => {
                    out.leaves.insert(i, g);
                }
                Op::Param(id) => match out.params.get_mut(id) {
                    Some(acc) => acc.add_assign(&g),
                    None => {
                        out.params.insert(*id, g);
                    }
                },
                Op::Gather { param, ids } => {
                    let acc = out.params.entry(*param).or_insert_with(|| {
                        let table = store.expect("gather without store").value(*param);
                        Matrix::zeros(table.rows(), table.cols())
                    });
                    for (r, &id) in ids.iter().enumerate() {
                        for (a, v) in acc.row_mut(id).iter_mut().zip(g.row(r)) {
                            *a += v;
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    if wants(*a) {
                        add_grad(&mut grads, *a, g.matmul_transposed(val(*b)));
                    }
                    if wants(*b) {
                        add_grad(&mut grads, *b, val(*a).transposed_matmul(&g));
                    }
                }
                Op::Transpose(a) => add_grad(&mut grads, *a, g.transpose()),
                Op::Add(a, b) => {
                    if wants(*a) {
                        add_grad(&mut grads, *a, g.clone());
                    }
                    if wants(*b) {
                        add_grad(&mut grads, *b, g);
                    }
                }
                Op::Sub(a, b) => {
                    if wants(*b) {
                        add_grad(&mut grads, *b, g.scale(-1.0));
                    }
                    if wants(*a) {
                        add_grad(&mut grads, *a, g);
                    }
                }
                Op::Mul(a, b) => {
                    if wants(*a) {
                        let mut ga = g.clone();
                        for (o, v) in ga.data_mut().iter_mut().zip(val(*b).data()) {
                            *o *= v;
                        }
                        add_grad(&mut grads, *a, ga);
                    }
                    if wants(*b) {
                        let mut gb = g;
                        for (o, v) in gb.data_mut().iter_mut().zip(val(*a).data()) {
                            *o *= v;
                        }
                        add_grad(&mut grads, *b, gb);
                    }
                }
                Op::AddBiasRow(x, bias) => {
                    if wants(*bias) {
                        let mut gb = Matrix::zeros(1, g.cols());
                        for r in 0..g.rows() {
                            for (o, v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                                *o += v;
                            }
                        }
                        add_grad(&mut grads, *bias, gb);
                    }
                    if wants(*x) {
                        add_grad(&mut grads, *x, g);
                    }
                }
                Op::Scale(x, s) => add_grad(&mut grads, *x, g.scale(*s)),
                Op::MulScalar(s, x) => {
                    if wants(*s) {
                        let gs = dot(g.data(), val(*x).data());
                        add_grad(&mut grads, *s, Matrix::scalar(gs));
                    }
                    if wants(*x) {
                        add_grad(&mut grads, *x, g.scale(val(*s).item()));
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let cols = val(p).cols();
                        if wants(p) {
                            let mut gp = Matrix::zeros(g.rows(), cols);
                            for r in 0..g.rows() {
                                gp.row_mut(r)
                                    .copy_from_slice(&g.row(r)[offset..offset + cols]);
                            }
                            add_grad(&mut grads, p, gp);
                        }
                        offset += cols;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let rows = val(p).rows();
                        if wants(p) {
                            let ids: Vec<usize> = (offset..offset + rows).collect();
                            add_grad(&mut grads, p, g.select_rows(&ids));
                        }
                        offset += rows;
                    }
                }
                Op::MeanRows(x) => {
                    let m = val(*x).rows();
                    let inv = 1.0 / m as f64;
                    let mut gx = Matrix::zeros(m, g.cols());
                    for r in 0..m {
                        for (o, v) in gx.row_mut(r).iter_mut().zip(g.data()) {
                            *o = v * inv;
                        }
                    }
                    add_grad(&mut grads, *x, gx);
                }
                Op::SliceRows(x, start) => {
                    let (m, n) = val(*x).shape();
                    let mut gx = Matrix::zeros(m, n);
                    for r in 0..g.rows() {
                        gx.row_mut(start + r).copy_from_slice(g.row(r));
                    }
                    add_grad(&mut grads, *x, gx);
                }
                Op::SliceCols(x, start) => {
                    let (m, n) = val(*x).shape();
                    let mut gx = Matrix::zeros(m, n);
                    for r in 0..m {
                        gx.row_mut(r)[*start..start + g.cols()].copy_from_slice(g.row(r));
                    }
                    add_grad(&mut grads, *x, gx);
                }
                Op::LeakyRelu(x, slope) => {
                    #[cfg(test)]
                    let slope = &if corrupt::LEAKY_SLOPE.with(|c| c.get()) {
                        -*slope
                    } else {
                        *slope
                    };
                    let input = val(*x);
                    let mut gx = g;
                    for (gv, &iv) in gx.data_mut().iter_mut().zip(input.data()) {
                        if iv < 0.0 {
                            *gv *= slope;
                        }
                    }
                    add_grad(&mut grads, *x, gx);
                }
                Op::Sigmoid(x) => {
                    let mut gx = g;
                    for (gv, &s) in gx.data_mut().iter_mut().zip(node.value.data()) {
                        *gv *= s * (1.0 - s);
                    }
                    add_grad(&mut grads, *x, gx);
                }
                Op::SoftmaxRows(x) => {
                    let y = &node.value;
                    let mut gx = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let inner = dot(yr, gr);
                        for ((o, yv), gv) in gx.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *o = yv * (gv - inner);
                        }
                    }
                    add_grad(&mut grads, *x, gx);
                }
                Op::RowNorm { x, inv_std } => {
                    let y = &node.value;
                    let n = y.cols() as f64;
                    let mut gx = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let mean_g = gr.iter().sum::<f64>() / n;
                        let mean_gy = dot(gr, yr) / n;
                        for ((o, yv), gv) in gx.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *o = inv_std[r] * (gv - mean_g - yv * mean_gy);
                        }
                    }
                    add_grad(&mut grads, *x, gx);
                }
                Op::Propagate(op, x) => add_grad(&mut grads, *x, op.apply_transposed(&g)),
                Op::Sum(x) => {
                    let (m, n) = val(*x).shape();
                    add_grad(&mut grads, *x, Matrix::filled(m, n, g.item()));
                }
                Op::Bce { probs, targets } => {
                    let p = val(*probs);
                    let scale = g.item();
                    let mut gp = Matrix::zeros(1, targets.len());
                    for (t, (o, &y)) in gp.data_mut().iter_mut().zip(targets).enumerate() {
                        let raw = p.data()[t];
                        // clamp is flat outside its range
                        if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&raw) {
                            continue;
                        }
                        *o = scale * (-y / raw + (1.0 - y) / (1.0 - raw));
                    }
                    add_grad(&mut grads, *probs, gp);
                }
            }
        }
        Ok(out)
    }
}

fn add_grad(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Logistic function evaluated without overflow for large `|x|`.
pub fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

pub fn bce_value(probs: &[f64], targets: &[f64]) -> f64 {
    probs
        .iter()
        .zip(targets)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum()
}

#[cfg(test)]
pub(crate) mod corrupt {
    use std::cell::Cell;

    thread_local! {
        /// Flips the sign of the leaky-relu slope in backward only.
        pub static LEAKY_SLOPE: Cell<bool> = const { Cell::new(false) };
    }
}
