//! Reverse-mode differentiation over a dynamic tape.
//!
//! The tape is rebuilt on every forward pass (batch and graph sizes vary
//! per step). Forward ops validate shapes and reject non-finite outputs;
//! [`Tape::backward`] replays the recorded ops in reverse and accumulates
//! dLoss/dParameter into the [`ParamStore`].

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::params::{ParamId, ParamStore};
use crate::numerics::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Index lists for [`Tape::gather_rows_sum`]; shared so batches can reuse them.
pub type IndexLists = Arc<Vec<Vec<usize>>>;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Softmax(Var),
    Concat(Var, Var),
    SumAxis(Var, usize),
    Mean(Var),
    SqDiff(Var, Var),
    Trace(Var),
    Transpose(Var),
    FrobeniusNorm(Var),
    GatherRowsSum(Var, IndexLists),
    PairwiseSqDist(Var),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last backward target w.r.t. `v`. None when `v` does
    /// not influence the loss (or backward has not run).
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    fn push(&mut self, op: &'static str, node_op: Op, value: Tensor) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op });
        }
        self.nodes.push(Node {
            op: node_op,
            value,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    // ── Leaves ───────────────────────────────────────────────────────

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push("constant", Op::Leaf, value)
    }

    pub fn scalar(&mut self, value: f64) -> Result<Var> {
        self.constant(Tensor::scalar(value))
    }

    /// Record the current value of a parameter; gradients reaching this
    /// leaf accumulate into the store during [`Tape::backward`].
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Result<Var> {
        self.push("param", Op::Param(id), store.value(id).clone())
    }

    // ── Forward ops ──────────────────────────────────────────────────

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows() {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", ta.shape(), tb.shape()),
            ));
        }
        let value = matmul_values(ta, tb);
        self.push("matmul", Op::MatMul(a, b), value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape(
                "add",
                format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            ));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::from_shape(ta.shape().to_vec(), data)?;
        self.push("add", Op::Add(a, b), value)
    }

    /// Matrix plus a row vector broadcast over every row.
    pub fn add_bias(&mut self, m: Var, bias: Var) -> Result<Var> {
        let (tm, tb) = (self.value(m), self.value(bias));
        if tm.rank() != 2 || tb.rank() != 1 || tm.cols() != tb.numel() {
            return Err(Error::shape(
                "add_bias",
                format!("{:?} + {:?}", tm.shape(), tb.shape()),
            ));
        }
        let cols = tm.cols();
        let mut data = tm.data().to_vec();
        for (i, v) in data.iter_mut().enumerate() {
            *v += tb.data()[i % cols];
        }
        let value = Tensor::from_shape(tm.shape().to_vec(), data)?;
        self.push("add_bias", Op::AddBias(m, bias), value)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape(
                "mul",
                format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            ));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::from_shape(ta.shape().to_vec(), data)?;
        self.push("mul", Op::Mul(a, b), value)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape(
                "div",
                format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            ));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x / y).collect();
        let value = Tensor::from_shape(ta.shape().to_vec(), data)?;
        self.push("div", Op::Div(a, b), value)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let ta = self.value(a);
        let data = ta.data().iter().map(|x| x * factor).collect();
        let value = Tensor::from_shape(ta.shape().to_vec(), data)?;
        self.push("scale", Op::Scale(a, factor), value)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let data = ta.data().iter().map(|x| x.max(0.0)).collect();
        let value = Tensor::from_shape(ta.shape().to_vec(), data)?;
        self.push("relu", Op::Relu(a), value)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let data = ta.data().iter().map(|x| sigmoid(*x)).collect();
        let value = Tensor::from_shape(ta.shape().to_vec(), data)?;
        self.push("sigmoid", Op::Sigmoid(a), value)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let data = ta.data().iter().map(|x| x.exp()).collect();
        let value = Tensor::from_shape(ta.shape().to_vec(), data)?;
        self.push("exp", Op::Exp(a), value)
    }

    /// Softmax over the last axis (rows of a matrix, or a whole vector),
    /// with max-subtraction for stability.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        if ta.rank() == 0 {
            return Err(Error::shape("softmax", "rank-0 input"));
        }
        let width = *ta.shape().last().unwrap();
        if width == 0 {
            return Err(Error::shape("softmax", "zero-width axis"));
        }
        let mut data = ta.data().to_vec();
        for chunk in data.chunks_mut(width) {
            softmax_in_place(chunk);
        }
        let value = Tensor::from_shape(ta.shape().to_vec(), data)?;
        self.push("softmax", Op::Softmax(a), value)
    }

    /// Concatenate along the last axis: vectors end to end, matrices
    /// side by side.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let value = match (ta.rank(), tb.rank()) {
            (1, 1) => {
                let mut data = ta.data().to_vec();
                data.extend_from_slice(tb.data());
                Tensor::vector(data)
            }
            (2, 2) if ta.rows() == tb.rows() => {
                let rows = ta.rows();
                let (ca, cb) = (ta.cols(), tb.cols());
                let mut data = Vec::with_capacity(rows * (ca + cb));
                for i in 0..rows {
                    data.extend_from_slice(ta.row(i));
                    data.extend_from_slice(tb.row(i));
                }
                Tensor::matrix(rows, ca + cb, data)?
            }
            _ => {
                return Err(Error::shape(
                    "concat",
                    format!("{:?} vs {:?}", ta.shape(), tb.shape()),
                ))
            }
        };
        self.push("concat", Op::Concat(a, b), value)
    }

    /// Sum over one axis. Vectors admit axis 0 (→ scalar); matrices sum
    /// rows out (axis 0 → column totals) or columns out (axis 1 → row
    /// totals).
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let ta = self.value(a);
        let value = match (ta.rank(), axis) {
            (1, 0) => Tensor::scalar(ta.data().iter().sum()),
            (2, 0) => {
                let (r, c) = (ta.rows(), ta.cols());
                let mut out = vec![0.0; c];
                for i in 0..r {
                    for (o, v) in out.iter_mut().zip(ta.row(i)) {
                        *o += v;
                    }
                }
                Tensor::vector(out)
            }
            (2, 1) => {
                let r = ta.rows();
                let out = (0..r).map(|i| ta.row(i).iter().sum()).collect();
                Tensor::vector(out)
            }
            _ => {
                return Err(Error::shape(
                    "sum_axis",
                    format!("axis {axis} of {:?}", ta.shape()),
                ))
            }
        };
        self.push("sum_axis", Op::SumAxis(a, axis), value)
    }

    /// Mean over all elements.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        if ta.numel() == 0 {
            return Err(Error::shape("mean", "empty tensor"));
        }
        let value = Tensor::scalar(ta.data().iter().sum::<f64>() / ta.numel() as f64);
        self.push("mean", Op::Mean(a), value)
    }

    /// Elementwise squared difference (a - b)².
    pub fn sq_diff(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape(
                "sq_diff",
                format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            ));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| (x - y) * (x - y))
            .collect();
        let value = Tensor::from_shape(ta.shape().to_vec(), data)?;
        self.push("sq_diff", Op::SqDiff(a, b), value)
    }

    pub fn trace(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        if ta.rank() != 2 || ta.rows() != ta.cols() {
            return Err(Error::shape("trace", format!("{:?}", ta.shape())));
        }
        let t = (0..ta.rows()).map(|i| ta.get(i, i)).sum();
        self.push("trace", Op::Trace(a), Tensor::scalar(t))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        if ta.rank() != 2 {
            return Err(Error::shape("transpose", format!("{:?}", ta.shape())));
        }
        let value = transpose_values(ta);
        self.push("transpose", Op::Transpose(a), value)
    }

    pub fn frobenius_norm(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        if ta.rank() == 0 {
            return Err(Error::shape("frobenius_norm", "rank-0 input"));
        }
        let norm = ta.data().iter().map(|x| x * x).sum::<f64>().sqrt();
        self.push("frobenius_norm", Op::FrobeniusNorm(a), Tensor::scalar(norm))
    }

    /// Row i of the output is the sum of the input rows listed in
    /// `lists[i]`; an empty list yields a zero row. Covers neighbor
    /// aggregation, embedding lookup, and per-graph readout pooling.
    pub fn gather_rows_sum(&mut self, a: Var, lists: IndexLists) -> Result<Var> {
        let ta = self.value(a);
        if ta.rank() != 2 {
            return Err(Error::shape("gather_rows_sum", format!("{:?}", ta.shape())));
        }
        let (rows, cols) = (ta.rows(), ta.cols());
        let mut data = vec![0.0; lists.len() * cols];
        for (i, list) in lists.iter().enumerate() {
            let out = &mut data[i * cols..(i + 1) * cols];
            for &j in list {
                if j >= rows {
                    return Err(Error::shape(
                        "gather_rows_sum",
                        format!("row index {j} out of {rows}"),
                    ));
                }
                for (o, v) in out.iter_mut().zip(ta.row(j)) {
                    *o += v;
                }
            }
        }
        let value = Tensor::matrix(lists.len(), cols, data)?;
        self.push("gather_rows_sum", Op::GatherRowsSum(a, lists), value)
    }

    /// All pairwise squared Euclidean distances between rows: out[i][j] =
    /// ‖row_i − row_j‖².
    pub fn pairwise_sqdist(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        if ta.rank() != 2 {
            return Err(Error::shape("pairwise_sqdist", format!("{:?}", ta.shape())));
        }
        let n = ta.rows();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = ta.row_sqdist(i, j);
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        let value = Tensor::matrix(n, n, data)?;
        self.push("pairwise_sqdist", Op::PairwiseSqDist(a), value)
    }

    // ── Backward ─────────────────────────────────────────────────────

    /// Accumulate dLoss/dParameter into the store for every parameter
    /// reachable from `loss`. `loss` must be scalar.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore) -> Result<()> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            if grads[idx].is_none() {
                continue;
            }
            let (below, at) = grads.split_at_mut(idx);
            let upstream = at[0].as_ref().unwrap();
            let nodes = &self.nodes;
            let input = |v: Var| -> &Tensor { &nodes[v.0].value };

            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::Param(id) => store.accumulate_grad(*id, upstream),
                Op::MatMul(a, b) => {
                    let bt = transpose_values(input(*b));
                    accumulate(&mut below[a.0], input(*a), &matmul_values(upstream, &bt));
                    let at_ = transpose_values(input(*a));
                    accumulate(&mut below[b.0], input(*b), &matmul_values(&at_, upstream));
                }
                Op::Add(a, b) => {
                    accumulate(&mut below[a.0], input(*a), upstream);
                    accumulate(&mut below[b.0], input(*b), upstream);
                }
                Op::AddBias(m, bias) => {
                    accumulate(&mut below[m.0], input(*m), upstream);
                    let cols = input(*bias).numel();
                    let mut db = vec![0.0; cols];
                    for (i, g) in upstream.data().iter().enumerate() {
                        db[i % cols] += g;
                    }
                    accumulate(&mut below[bias.0], input(*bias), &Tensor::vector(db));
                }
                Op::Mul(a, b) => {
                    accumulate_scaled_by(&mut below[a.0], input(*a), upstream, input(*b));
                    accumulate_scaled_by(&mut below[b.0], input(*b), upstream, input(*a));
                }
                Op::Div(a, b) => {
                    let (av, bv) = (input(*a), input(*b));
                    let da: Vec<f64> = upstream
                        .data()
                        .iter()
                        .zip(bv.data())
                        .map(|(g, y)| g / y)
                        .collect();
                    accumulate(&mut below[a.0], av, &tensor_like(av, da));
                    let db: Vec<f64> = upstream
                        .data()
                        .iter()
                        .zip(av.data().iter().zip(bv.data()))
                        .map(|(g, (x, y))| -g * x / (y * y))
                        .collect();
                    accumulate(&mut below[b.0], bv, &tensor_like(bv, db));
                }
                Op::Scale(a, f) => {
                    let da: Vec<f64> = upstream.data().iter().map(|g| g * f).collect();
                    accumulate(&mut below[a.0], input(*a), &tensor_like(input(*a), da));
                }
                Op::Relu(a) => {
                    let av = input(*a);
                    let da: Vec<f64> = upstream
                        .data()
                        .iter()
                        .zip(av.data())
                        .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                        .collect();
                    accumulate(&mut below[a.0], av, &tensor_like(av, da));
                }
                Op::Sigmoid(a) => {
                    let yv = &self.nodes[idx].value;
                    let da: Vec<f64> = upstream
                        .data()
                        .iter()
                        .zip(yv.data())
                        .map(|(g, y)| g * y * (1.0 - y))
                        .collect();
                    accumulate(&mut below[a.0], input(*a), &tensor_like(input(*a), da));
                }
                Op::Exp(a) => {
                    let yv = &self.nodes[idx].value;
                    let da: Vec<f64> = upstream
                        .data()
                        .iter()
                        .zip(yv.data())
                        .map(|(g, y)| g * y)
                        .collect();
                    accumulate(&mut below[a.0], input(*a), &tensor_like(input(*a), da));
                }
                Op::Softmax(a) => {
                    let yv = &self.nodes[idx].value;
                    let width = *yv.shape().last().unwrap();
                    let mut da = vec![0.0; yv.numel()];
                    for (chunk, (ys, gs)) in da
                        .chunks_mut(width)
                        .zip(yv.data().chunks(width).zip(upstream.data().chunks(width)))
                    {
                        let dot: f64 = ys.iter().zip(gs).map(|(y, g)| y * g).sum();
                        for ((d, y), g) in chunk.iter_mut().zip(ys).zip(gs) {
                            *d = y * (g - dot);
                        }
                    }
                    accumulate(&mut below[a.0], input(*a), &tensor_like(input(*a), da));
                }
                Op::Concat(a, b) => {
                    let (av, bv) = (input(*a), input(*b));
                    if av.rank() == 1 {
                        let (ga, gb) = upstream.data().split_at(av.numel());
                        accumulate(&mut below[a.0], av, &Tensor::vector(ga.to_vec()));
                        accumulate(&mut below[b.0], bv, &Tensor::vector(gb.to_vec()));
                    } else {
                        let (ca, cb) = (av.cols(), bv.cols());
                        let rows = av.rows();
                        let mut ga = Vec::with_capacity(rows * ca);
                        let mut gb = Vec::with_capacity(rows * cb);
                        for i in 0..rows {
                            let row = upstream.row(i);
                            ga.extend_from_slice(&row[..ca]);
                            gb.extend_from_slice(&row[ca..]);
                        }
                        accumulate(&mut below[a.0], av, &Tensor::matrix(rows, ca, ga)?);
                        accumulate(&mut below[b.0], bv, &Tensor::matrix(rows, cb, gb)?);
                    }
                }
                Op::SumAxis(a, axis) => {
                    let av = input(*a);
                    let da = match (av.rank(), axis) {
                        (1, 0) => vec![upstream.item(); av.numel()],
                        (2, 0) => {
                            let (r, c) = (av.rows(), av.cols());
                            let mut d = vec![0.0; r * c];
                            for i in 0..r {
                                d[i * c..(i + 1) * c].copy_from_slice(upstream.data());
                            }
                            d
                        }
                        (2, 1) => {
                            let (r, c) = (av.rows(), av.cols());
                            let mut d = vec![0.0; r * c];
                            for i in 0..r {
                                d[i * c..(i + 1) * c].fill(upstream.data()[i]);
                            }
                            d
                        }
                        _ => unreachable!("validated in forward"),
                    };
                    accumulate(&mut below[a.0], av, &tensor_like(av, da));
                }
                Op::Mean(a) => {
                    let av = input(*a);
                    let g = upstream.item() / av.numel() as f64;
                    accumulate(&mut below[a.0], av, &tensor_like(av, vec![g; av.numel()]));
                }
                Op::SqDiff(a, b) => {
                    let (av, bv) = (input(*a), input(*b));
                    let da: Vec<f64> = upstream
                        .data()
                        .iter()
                        .zip(av.data().iter().zip(bv.data()))
                        .map(|(g, (x, y))| g * 2.0 * (x - y))
                        .collect();
                    let db: Vec<f64> = da.iter().map(|d| -d).collect();
                    accumulate(&mut below[a.0], av, &tensor_like(av, da));
                    accumulate(&mut below[b.0], bv, &tensor_like(bv, db));
                }
                Op::Trace(a) => {
                    let av = input(*a);
                    let n = av.rows();
                    let g = upstream.item();
                    let mut da = vec![0.0; n * n];
                    for i in 0..n {
                        da[i * n + i] = g;
                    }
                    accumulate(&mut below[a.0], av, &Tensor::matrix(n, n, da)?);
                }
                Op::Transpose(a) => {
                    accumulate(&mut below[a.0], input(*a), &transpose_values(upstream));
                }
                Op::FrobeniusNorm(a) => {
                    let av = input(*a);
                    let norm = self.nodes[idx].value.item();
                    let g = upstream.item();
                    let da: Vec<f64> = if norm > 0.0 {
                        av.data().iter().map(|x| g * x / norm).collect()
                    } else {
                        vec![0.0; av.numel()]
                    };
                    accumulate(&mut below[a.0], av, &tensor_like(av, da));
                }
                Op::GatherRowsSum(a, lists) => {
                    let av = input(*a);
                    let cols = av.cols();
                    let mut da = vec![0.0; av.numel()];
                    for (i, list) in lists.iter().enumerate() {
                        let g = upstream.row(i);
                        for &j in list.iter() {
                            for (d, gv) in da[j * cols..(j + 1) * cols].iter_mut().zip(g) {
                                *d += gv;
                            }
                        }
                    }
                    accumulate(&mut below[a.0], av, &tensor_like(av, da));
                }
                Op::PairwiseSqDist(a) => {
                    // dR = 2 (diag(rowsum(S)) R − S R) with S = Ḡ + Ḡᵀ.
                    let rv = input(*a);
                    let n = rv.rows();
                    let d = rv.cols();
                    let gt = transpose_values(upstream);
                    let s: Vec<f64> = upstream
                        .data()
                        .iter()
                        .zip(gt.data())
                        .map(|(x, y)| x + y)
                        .collect();
                    let s = Tensor::matrix(n, n, s)?;
                    let sr = matmul_values(&s, rv);
                    let mut da = vec![0.0; n * d];
                    for i in 0..n {
                        let rowsum: f64 = s.row(i).iter().sum();
                        for k in 0..d {
                            da[i * d + k] = 2.0 * (rowsum * rv.get(i, k) - sr.get(i, k));
                        }
                    }
                    accumulate(&mut below[a.0], rv, &Tensor::matrix(n, d, da)?);
                }
            }
        }

        self.grads = grads;
        Ok(())
    }
}

fn tensor_like(like: &Tensor, data: Vec<f64>) -> Tensor {
    Tensor::from_shape(like.shape().to_vec(), data).expect("shape preserved")
}

fn accumulate(slot: &mut Option<Tensor>, like: &Tensor, delta: &Tensor) {
    let grad = slot.get_or_insert_with(|| Tensor::zeros_like(like));
    for (g, d) in grad.data_mut().iter_mut().zip(delta.data()) {
        *g += d;
    }
}

/// slot += upstream ⊙ factor, elementwise.
fn accumulate_scaled_by(slot: &mut Option<Tensor>, like: &Tensor, upstream: &Tensor, factor: &Tensor) {
    let grad = slot.get_or_insert_with(|| Tensor::zeros_like(like));
    for ((g, u), f) in grad
        .data_mut()
        .iter_mut()
        .zip(upstream.data())
        .zip(factor.data())
    {
        *g += u * f;
    }
}

pub(crate) fn matmul_values(a: &Tensor, b: &Tensor) -> Tensor {
    let m = a.rows();
    let n = b.cols();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = a.row(i);
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b.data()[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::matrix(m, n, out).expect("shape arithmetic")
}

pub(crate) fn transpose_values(a: &Tensor) -> Tensor {
    let r = a.rows();
    let c = a.cols();
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a.get(i, j);
        }
    }
    Tensor::matrix(c, r, out).expect("shape arithmetic")
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}
