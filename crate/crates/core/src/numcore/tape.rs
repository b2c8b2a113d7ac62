//! Dynamic reverse-mode differentiation tape.
//!
//! A [`Tape`] is rebuilt for every file: each op appends a node holding its
//! forward value and enough information to route gradients back to its
//! inputs. [`Tape::backward`] walks the nodes in reverse creation order, so
//! a node used several times accumulates all of its contributions.

use crate::error::{Error, Result};

use super::array::{dot, Array2};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Clamp applied to probabilities inside [`Tape::weighted_bce`].
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Array2),
    Scale(Var, f64),
    AddScalar(Var),
    AddRow(Var, Var),
    BroadcastRows(Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    Diag(Var),
    MaskRows(Var, Vec<bool>),
    MaskCols(Var, Vec<bool>),
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    MeanRows(Var),
    SumPool(Var, usize),
    LayerNorm { input: Var, inv_std: Vec<f64> },
    WeightedBce { p: Var, label: f64, pos_weight: f64 },
    EmbedMean { table: Var, lines: Vec<Vec<usize>> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "hadamard",
            Op::MulConst(..) => "mul_const",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::AddRow(..) => "add_row",
            Op::BroadcastRows(_) => "broadcast_rows",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::ConcatCols(_) => "concat_cols",
            Op::ConcatRows(_) => "concat_rows",
            Op::SliceRows(..) => "slice_rows",
            Op::SliceCols(..) => "slice_cols",
            Op::Diag(_) => "diag",
            Op::MaskRows(..) => "mask_rows",
            Op::MaskCols(..) => "mask_cols",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::SumRows(_) => "sum_rows",
            Op::MeanRows(_) => "mean_rows",
            Op::SumPool(..) => "sum_pool_1d",
            Op::LayerNorm { .. } => "layer_norm",
            Op::WeightedBce { .. } => "weighted_bce",
            Op::EmbedMean { .. } => "embed_mean",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: Array2,
    op: Op,
}

/// Computation tape. Single-threaded; build one per forward pass.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Array2>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, or `None` if the loss does
    /// not depend on it.
    pub fn get(&self, var: Var) -> Option<&Array2> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Array2> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

fn dim(op: &'static str, a: &Array2, b: &Array2) -> Error {
    Error::Dimension {
        op,
        left: a.shape(),
        right: b.shape(),
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

    fn push(&mut self, value: Array2, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Registers an input (parameter or constant).
    pub fn leaf(&mut self, value: Array2) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, var: Var) -> &Array2 {
        &self.nodes[var.0].value
    }

    pub fn scalar(&self, var: Var) -> f64 {
        self.nodes[var.0].value.get(0, 0)
    }

    /// Name of the first op whose forward value is non-finite.
    pub fn first_non_finite(&self) -> Option<(usize, &'static str)> {
        self.nodes
            .iter()
            .enumerate()
            .find(|(_, n)| !n.value.is_finite())
            .map(|(i, n)| (i, n.op.name()))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(dim(op, va, vb));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(value, Op::Sub(a, b)))
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("hadamard", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(value, Op::Mul(a, b)))
    }

    /// Hadamard product with a constant (e.g. a dropout mask).
    pub fn mul_const(&mut self, a: Var, c: Array2) -> Result<Var> {
        let va = self.value(a);
        if va.shape() != c.shape() {
            return Err(dim("mul_const", va, &c));
        }
        let value = va.zip_map(&c, |x, y| x * y);
        Ok(self.push(value, Op::MulConst(a, c)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).map(|x| x * factor);
        self.push(value, Op::Scale(a, factor))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x + c);
        self.push(value, Op::AddScalar(a))
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let neg = self.scale(a, -1.0);
        self.add_scalar(neg, 1.0)
    }

    /// Adds a `1 x c` row vector to every row of an `n x c` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.rows() != 1 || vr.cols() != va.cols() {
            return Err(dim("add_row", va, vr));
        }
        let mut value = va.clone();
        for r in 0..value.rows() {
            for (x, b) in value.row_mut(r).iter_mut().zip(vr.data()) {
                *x += b;
            }
        }
        Ok(self.push(value, Op::AddRow(a, row)))
    }

    /// Repeats a `1 x c` row vector `n` times.
    pub fn broadcast_rows(&mut self, row: Var, n: usize) -> Result<Var> {
        let vr = self.value(row);
        if vr.rows() != 1 {
            return Err(dim("broadcast_rows", vr, &Array2::zeros(n, vr.cols())));
        }
        let data = vr.data().repeat(n);
        let value = Array2::from_raw(n, vr.cols(), data);
        Ok(self.push(value, Op::BroadcastRows(row)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(value, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self.value(parts[0]);
        let rows = first.rows();
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(dim("concat_cols", first, self.value(p)));
            }
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let value = Array2::from_raw(rows, cols, data);
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self.value(parts[0]);
        let cols = first.cols();
        for &p in parts {
            if self.value(p).cols() != cols {
                return Err(dim("concat_rows", first, self.value(p)));
            }
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let rows = data.len() / cols.max(1);
        let value = Array2::from_raw(rows, cols, data);
        Ok(self.push(value, Op::ConcatRows(parts.to_vec())))
    }

    /// Rows `start..start+len`.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let va = self.value(a);
        if start + len > va.rows() {
            return Err(dim("slice_rows", va, &Array2::zeros(start + len, va.cols())));
        }
        let value = Array2::from_raw(
            len,
            va.cols(),
            va.data()[start * va.cols()..(start + len) * va.cols()].to_vec(),
        );
        Ok(self.push(value, Op::SliceRows(a, start)))
    }

    /// Columns `start..start+len`.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let va = self.value(a);
        if start + len > va.cols() {
            return Err(dim("slice_cols", va, &Array2::zeros(va.rows(), start + len)));
        }
        let mut data = Vec::with_capacity(va.rows() * len);
        for r in 0..va.rows() {
            data.extend_from_slice(&va.row(r)[start..start + len]);
        }
        let value = Array2::from_raw(va.rows(), len, data);
        Ok(self.push(value, Op::SliceCols(a, start)))
    }

    /// Diagonal of a square matrix as a `1 x n` row.
    pub fn diag(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        if va.rows() != va.cols() {
            return Err(dim("diag", va, &va.transpose()));
        }
        let data = (0..va.rows()).map(|i| va.get(i, i)).collect();
        let value = Array2::from_raw(1, va.rows(), data);
        Ok(self.push(value, Op::Diag(a)))
    }

    /// Zeroes every row `r` with `keep[r] == false`.
    pub fn mask_rows(&mut self, a: Var, keep: &[bool]) -> Result<Var> {
        let va = self.value(a);
        if keep.len() != va.rows() {
            return Err(dim("mask_rows", va, &Array2::zeros(keep.len(), 1)));
        }
        let mut value = va.clone();
        for (r, &k) in keep.iter().enumerate() {
            if !k {
                value.row_mut(r).fill(0.0);
            }
        }
        Ok(self.push(value, Op::MaskRows(a, keep.to_vec())))
    }

    /// Zeroes every column `c` with `keep[c] == false`.
    pub fn mask_cols(&mut self, a: Var, keep: &[bool]) -> Result<Var> {
        let va = self.value(a);
        if keep.len() != va.cols() {
            return Err(dim("mask_cols", va, &Array2::zeros(1, keep.len())));
        }
        let mut value = va.clone();
        for r in 0..value.rows() {
            for (x, &k) in value.row_mut(r).iter_mut().zip(keep) {
                if !k {
                    *x = 0.0;
                }
            }
        }
        Ok(self.push(value, Op::MaskCols(a, keep.to_vec())))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Array2::scalar(self.value(a).sum());
        self.push(value, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let value = Array2::scalar(va.sum() / va.len().max(1) as f64);
        self.push(value, Op::Mean(a))
    }

    /// Column sums: `n x c` to `1 x c`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let value = column_sums(self.value(a));
        self.push(value, Op::SumRows(a))
    }

    /// Column means: `n x c` to `1 x c`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let n = va.rows().max(1) as f64;
        let value = column_sums(va).map(|x| x / n);
        self.push(value, Op::MeanRows(a))
    }

    /// One-dimensional non-overlapping sum pooling with stride `s` over a
    /// `1 x k` row.
    pub fn sum_pool_1d(&mut self, a: Var, stride: usize) -> Result<Var> {
        let va = self.value(a);
        if va.rows() != 1 || stride == 0 || !va.cols().is_multiple_of(stride) {
            return Err(Error::Config(format!(
                "sum_pool_1d needs a 1 x k row with k divisible by the stride; got {:?} with stride {stride}",
                va.shape()
            )));
        }
        let data = va.data().chunks(stride).map(|c| c.iter().sum()).collect();
        let value = Array2::from_raw(1, va.cols() / stride, data);
        Ok(self.push(value, Op::SumPool(a, stride)))
    }

    /// Row-wise layer normalization without affine parameters.
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Var {
        let va = self.value(a);
        let mut value = va.clone();
        let mut inv_std = Vec::with_capacity(va.rows());
        let c = va.cols() as f64;
        for r in 0..va.rows() {
            let row = value.row_mut(r);
            let mean = row.iter().sum::<f64>() / c;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / c;
            let inv = 1.0 / (var + eps).sqrt();
            row.iter_mut().for_each(|x| *x = (*x - mean) * inv);
            inv_std.push(inv);
        }
        self.push(value, Op::LayerNorm { input: a, inv_std })
    }

    /// Weighted binary cross-entropy on a `1 x 1` probability node:
    /// `-(w·y·ln p + (1-y)·ln(1-p))` with `p` clamped to `[ε, 1-ε]`.
    pub fn weighted_bce(&mut self, p: Var, label: f64, pos_weight: f64) -> Result<Var> {
        let vp = self.value(p);
        if vp.shape() != (1, 1) {
            return Err(dim("weighted_bce", vp, &Array2::scalar(0.0)));
        }
        let loss = weighted_bce_value(vp.get(0, 0), label, pos_weight);
        Ok(self.push(
            Array2::scalar(loss),
            Op::WeightedBce {
                p,
                label,
                pos_weight,
            },
        ))
    }

    /// Mean of embedding-table rows per line; one output row per entry of
    /// `lines`.
    pub fn embed_mean(&mut self, table: Var, lines: Vec<Vec<usize>>) -> Result<Var> {
        let vt = self.value(table);
        let d = vt.cols();
        let mut data = Vec::with_capacity(lines.len() * d);
        for ids in &lines {
            if ids.is_empty() {
                return Err(Error::Data("embed_mean over an empty line".into()));
            }
            let mut acc = vec![0.0; d];
            for &id in ids {
                if id >= vt.rows() {
                    return Err(dim("embed_mean", vt, &Array2::zeros(id + 1, d)));
                }
                for (a, &x) in acc.iter_mut().zip(vt.row(id)) {
                    *a += x;
                }
            }
            let inv = 1.0 / ids.len() as f64;
            data.extend(acc.into_iter().map(|x| x * inv));
        }
        let value = Array2::from_raw(lines.len(), d, data);
        Ok(self.push(value, Op::EmbedMean { table, lines }))
    }

    /// Reverse pass from a `1 x 1` loss node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(dim("backward", lv, &Array2::scalar(0.0)));
        }
        let mut grads: Vec<Option<Array2>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Array2::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Array2, grads: &mut [Option<Array2>]) {
        let mut acc = |v: Var, contrib: Array2| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&contrib),
            slot @ None => *slot = Some(contrib),
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                acc(*a, g.matmul_nt(vb));
                acc(*b, va.matmul_tn(g));
            }
            Op::Transpose(a) => acc(*a, g.transpose()),
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                acc(*a, g.zip_map(vb, |x, y| x * y));
                acc(*b, g.zip_map(va, |x, y| x * y));
            }
            Op::MulConst(a, c) => acc(*a, g.zip_map(c, |x, y| x * y)),
            Op::Scale(a, f) => acc(*a, g.map(|x| x * f)),
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::AddRow(a, row) => {
                acc(*a, g.clone());
                acc(*row, column_sums(g));
            }
            Op::BroadcastRows(row) => acc(*row, column_sums(g)),
            Op::Relu(a) => {
                let va = self.value(*a);
                acc(*a, g.zip_map(va, |x, y| if y > 0.0 { x } else { 0.0 }));
            }
            Op::Sigmoid(a) => acc(*a, g.zip_map(&node.value, |x, s| x * s * (1.0 - s))),
            Op::Tanh(a) => acc(*a, g.zip_map(&node.value, |x, t| x * (1.0 - t * t))),
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    let mut data = Vec::with_capacity(g.rows() * w);
                    for r in 0..g.rows() {
                        data.extend_from_slice(&g.row(r)[start..start + w]);
                    }
                    acc(p, Array2::from_raw(g.rows(), w, data));
                    start += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                let cols = g.cols();
                for &p in parts {
                    let h = self.value(p).rows();
                    let data = g.data()[start * cols..(start + h) * cols].to_vec();
                    acc(p, Array2::from_raw(h, cols, data));
                    start += h;
                }
            }
            Op::SliceRows(a, start) => {
                let va = self.value(*a);
                let mut full = Array2::zeros(va.rows(), va.cols());
                let cols = va.cols();
                full.data_mut()[start * cols..start * cols + g.len()].copy_from_slice(g.data());
                acc(*a, full);
            }
            Op::SliceCols(a, start) => {
                let va = self.value(*a);
                let mut full = Array2::zeros(va.rows(), va.cols());
                for r in 0..g.rows() {
                    full.row_mut(r)[*start..start + g.cols()].copy_from_slice(g.row(r));
                }
                acc(*a, full);
            }
            Op::Diag(a) => {
                let n = g.cols();
                let mut full = Array2::zeros(n, n);
                for i in 0..n {
                    full.set(i, i, g.get(0, i));
                }
                acc(*a, full);
            }
            Op::MaskRows(a, keep) => {
                let mut out = g.clone();
                for (r, &k) in keep.iter().enumerate() {
                    if !k {
                        out.row_mut(r).fill(0.0);
                    }
                }
                acc(*a, out);
            }
            Op::MaskCols(a, keep) => {
                let mut out = g.clone();
                for r in 0..out.rows() {
                    for (x, &k) in out.row_mut(r).iter_mut().zip(keep) {
                        if !k {
                            *x = 0.0;
                        }
                    }
                }
                acc(*a, out);
            }
            Op::Sum(a) => {
                let va = self.value(*a);
                acc(*a, Array2::filled(va.rows(), va.cols(), g.get(0, 0)));
            }
            Op::Mean(a) => {
                let va = self.value(*a);
                let each = g.get(0, 0) / va.len().max(1) as f64;
                acc(*a, Array2::filled(va.rows(), va.cols(), each));
            }
            Op::SumRows(a) => {
                let n = self.value(*a).rows();
                acc(*a, Array2::from_raw(n, g.cols(), g.data().repeat(n)));
            }
            Op::MeanRows(a) => {
                let n = self.value(*a).rows();
                let inv = 1.0 / n.max(1) as f64;
                let row: Vec<f64> = g.data().iter().map(|x| x * inv).collect();
                acc(*a, Array2::from_raw(n, g.cols(), row.repeat(n)));
            }
            Op::SumPool(a, s) => {
                let data = g
                    .data()
                    .iter()
                    .flat_map(|&x| std::iter::repeat_n(x, *s))
                    .collect();
                acc(*a, Array2::from_raw(1, g.cols() * s, data));
            }
            Op::LayerNorm { input, inv_std } => {
                let y = &node.value;
                let c = y.cols() as f64;
                let mut out = Array2::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (gr, yr) = (g.row(r), y.row(r));
                    let mean_g = gr.iter().sum::<f64>() / c;
                    let mean_gy = dot(gr, yr) / c;
                    for ((o, &gi), &yi) in out.row_mut(r).iter_mut().zip(gr).zip(yr) {
                        *o = inv_std[r] * (gi - mean_g - yi * mean_gy);
                    }
                }
                acc(*input, out);
            }
            Op::WeightedBce {
                p,
                label,
                pos_weight,
            } => {
                let raw = self.value(*p).get(0, 0);
                let d = if (BCE_EPS..=1.0 - BCE_EPS).contains(&raw) {
                    -pos_weight * label / raw + (1.0 - label) / (1.0 - raw)
                } else {
                    0.0
                };
                acc(*p, Array2::scalar(d * g.get(0, 0)));
            }
            Op::EmbedMean { table, lines } => {
                let vt = self.value(*table);
                let mut out = Array2::zeros(vt.rows(), vt.cols());
                for (r, ids) in lines.iter().enumerate() {
                    let inv = 1.0 / ids.len() as f64;
                    let gr = g.row(r);
                    for &id in ids {
                        for (o, &x) in out.row_mut(id).iter_mut().zip(gr) {
                            *o += x * inv;
                        }
                    }
                }
                acc(*table, out);
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Value of the weighted binary cross-entropy for one probability.
pub fn weighted_bce_value(p: f64, label: f64, pos_weight: f64) -> f64 {
    let prob = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -(pos_weight * label * prob.ln() + (1.0 - label) * (1.0 - prob).ln())
}

fn column_sums(a: &Array2) -> Array2 {
    let mut out = vec![0.0; a.cols()];
    for r in 0..a.rows() {
        for (o, &x) in out.iter_mut().zip(a.row(r)) {
            *o += x;
        }
    }
    Array2::from_raw(1, a.cols(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: &[f64]) -> Array2 {
        Array2::row_vector(v)
    }

    #[test]
    fn relu_forward() {
        let mut t = Tape::new();
        let x = t.leaf(row(&[-1.0, 2.0]));
        let y = t.relu(x);
        assert_eq!(t.value(y).data(), &[0.0, 2.0]);
    }

    #[test]
    fn relu_derivative_at_zero_is_zero() {
        let mut t = Tape::new();
        let x = t.leaf(row(&[0.0, 1.0]));
        let y = t.relu(x);
        let s = t.sum(y);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn sigmoid_midpoint() {
        let mut t = Tape::new();
        let x = t.leaf(Array2::scalar(0.0));
        let y = t.sigmoid(x);
        assert_eq!(t.scalar(y), 0.5);
    }

    #[test]
    fn reused_node_accumulates() {
        let mut t = Tape::new();
        let x = t.leaf(row(&[3.0, -1.5]));
        let y = t.mul(x, x).unwrap();
        let s = t.sum(y);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[6.0, -3.0]);
    }

    #[test]
    fn masked_positions_get_zero_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Array2::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let m = t.mask_rows(x, &[true, false]).unwrap();
        let m = t.mask_cols(m, &[false, true]).unwrap();
        assert_eq!(t.value(m).data(), &[0.0, 2.0, 0.0, 0.0]);
        let sq = t.mul(m, m).unwrap();
        let s = t.sum(sq);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 4.0, 0.0, 0.0]);
    }

    #[test]
    fn sum_pool_values() {
        let mut t = Tape::new();
        let x = t.leaf(row(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let p = t.sum_pool_1d(x, 3).unwrap();
        assert_eq!(t.value(p).data(), &[6.0, 15.0]);
        let same = t.sum_pool_1d(x, 1).unwrap();
        assert_eq!(t.value(same), t.value(x));
        assert!(matches!(t.sum_pool_1d(x, 4), Err(Error::Config(_))));
        let s = t.sum(p);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn sum_pool_wide() {
        let mut t = Tape::new();
        let x = t.leaf(Array2::zeros(1, 768));
        let p = t.sum_pool_1d(x, 3).unwrap();
        assert_eq!(t.value(p).cols(), 256);
    }

    #[test]
    fn bce_values() {
        let mut t = Tape::new();
        let p = t.leaf(Array2::scalar(0.5));
        let l1 = t.weighted_bce(p, 1.0, 1.0).unwrap();
        let l3 = t.weighted_bce(p, 1.0, 3.0).unwrap();
        assert!((t.scalar(l1) - 2f64.ln()).abs() < 1e-15);
        assert!((t.scalar(l3) - 3.0 * 2f64.ln()).abs() < 1e-14);
        let near_one = t.leaf(Array2::scalar(1.0));
        let l = t.weighted_bce(near_one, 1.0, 1.0).unwrap();
        assert!(t.scalar(l) < 1e-6);
    }

    #[test]
    fn shape_errors_name_the_op() {
        let mut t = Tape::new();
        let a = t.leaf(Array2::zeros(2, 3));
        let b = t.leaf(Array2::zeros(3, 2));
        let err = t.add(a, b).unwrap_err().to_string();
        assert!(err.contains("add") && err.contains("(2, 3)") && err.contains("(3, 2)"));
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let mut t = Tape::new();
        let x = t.leaf(Array2::from_rows(&[vec![1.0, 2.0, 3.0, 6.0]]).unwrap());
        let y = t.layer_norm(x, 1e-5);
        let v = t.value(y);
        let mean = v.sum() / 4.0;
        let var = v.data().iter().map(|x| x * x).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-4);
    }
}
