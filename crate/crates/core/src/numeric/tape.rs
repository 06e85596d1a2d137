//! Define-by-run reverse-mode differentiation.
//!
//! Every operation evaluates eagerly and appends a node to the tape.
//! [`Tape::backward`] walks the nodes in exact reverse order, so the
//! gradient of any node is complete before its own inputs are visited.

use super::params::{ParamGrads, ParamId, ParamStore};
use super::tensor::{logsumexp, matmul_acc, relu, sigmoid, Tensor};
use super::NumericError;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Sigmoid,
    Tanh,
    Relu,
}

impl Unary {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Sigmoid => sigmoid(x),
            Unary::Tanh => x.tanh(),
            Unary::Relu => relu(x),
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Tanh => 1.0 - y * y,
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    Unary(Var, Unary),
    LogSumExp { x: Var, axis: usize },
    Sum(Var),
    SliceRows { x: Var, start: usize },
    SliceCols { x: Var, start: usize },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SelectRows { x: Var, rows: Vec<usize> },
    Gather { x: Var, idx: Vec<usize> },
    OuterAdd(Var, Var),
    GroupSoftmax { x: Var, groups: usize },
    Reshape(Var),
}

enum Value<'p> {
    Owned(Tensor),
    Borrowed(&'p Tensor),
}

struct Node<'p> {
    op: Op,
    value: Value<'p>,
    needs_grad: bool,
}

/// Operation record for one forward computation.
///
/// Parameter leaves borrow their tensors from a [`ParamStore`] for the
/// lifetime `'p`; nothing is copied.
#[derive(Default)]
pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> NumericError {
    NumericError::Shape {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn acc_into(slot: &mut Option<Vec<f64>>, len: usize) -> &mut Vec<f64> {
    slot.get_or_insert_with(|| vec![0.0; len])
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Borrowed(t) => t,
        }
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value: Value::Owned(value),
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn grad_flag(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Constant, t, false)
    }

    pub fn param(&mut self, store: &'p ParamStore, id: ParamId) -> Var {
        self.nodes.push(Node {
            op: Op::Param(id),
            value: Value::Borrowed(store.get(id)),
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(shape_err("matmul", ta, tb));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = vec![0.0; m * n];
        matmul_acc(ta.data(), tb.data(), &mut out, m, k, n);
        let t = Tensor::new(vec![m, n], out)?;
        let g = self.grad_flag(&[a, b]);
        Ok(self.push(Op::MatMul(a, b), t, g))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, NumericError> {
        let ta = self.value(a);
        if ta.shape().len() != 2 {
            return Err(NumericError::Rank {
                op: "transpose",
                shape: ta.shape().to_vec(),
            });
        }
        let (m, n) = (ta.shape()[0], ta.shape()[1]);
        let d = ta.data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = d[i * n + j];
            }
        }
        let t = Tensor::new(vec![n, m], out)?;
        let g = self.grad_flag(&[a]);
        Ok(self.push(Op::Transpose(a), t, g))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, NumericError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() == tb.shape() {
            let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(ta.shape().to_vec(), data)
        } else if tb.is_scalar() {
            let y = tb.item();
            let data = ta.data().iter().map(|&x| f(x, y)).collect();
            Tensor::new(ta.shape().to_vec(), data)
        } else if ta.is_scalar() {
            let x = ta.item();
            let data = tb.data().iter().map(|&y| f(x, y)).collect();
            Tensor::new(tb.shape().to_vec(), data)
        } else {
            Err(shape_err(name, ta, tb))
        }
    }

    /// Element-wise sum; shapes must match unless one side is a scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let t = self.binary("add", a, b, |x, y| x + y)?;
        let g = self.grad_flag(&[a, b]);
        Ok(self.push(Op::Add(a, b), t, g))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let t = self.binary("sub", a, b, |x, y| x - y)?;
        let g = self.grad_flag(&[a, b]);
        Ok(self.push(Op::Sub(a, b), t, g))
    }

    /// Element-wise (Hadamard) product; scalar operands broadcast.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let t = self.binary("mul", a, b, |x, y| x * y)?;
        let g = self.grad_flag(&[a, b]);
        Ok(self.push(Op::Mul(a, b), t, g))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let ta = self.value(a);
        let t = Tensor::new(ta.shape().to_vec(), ta.data().iter().map(|x| x * c).collect())
            .expect("same shape");
        let g = self.grad_flag(&[a]);
        self.push(Op::Scale(a, c), t, g)
    }

    /// Adds the vector `b` (length `n`) to every row of the `m×n` matrix `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var, NumericError> {
        let (tx, tb) = (self.value(x), self.value(b));
        if tx.shape().len() != 2 || tb.len() != tx.shape()[1] {
            return Err(shape_err("add_row", tx, tb));
        }
        let n = tx.shape()[1];
        let bd = tb.data();
        let data = tx
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + bd[i % n])
            .collect();
        let t = Tensor::new(tx.shape().to_vec(), data)?;
        let g = self.grad_flag(&[x, b]);
        Ok(self.push(Op::AddRow(x, b), t, g))
    }

    pub fn unary(&mut self, a: Var, f: Unary) -> Var {
        let ta = self.value(a);
        let t = Tensor::new(ta.shape().to_vec(), ta.data().iter().map(|&x| f.apply(x)).collect())
            .expect("same shape");
        let g = self.grad_flag(&[a]);
        self.push(Op::Unary(a, f), t, g)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Tanh)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Relu)
    }

    /// Log-sum-exp reduction of a 1-D tensor (axis 0, giving a scalar) or
    /// of a 2-D tensor along `axis` 0 (over rows) or 1 (over columns).
    pub fn logsumexp(&mut self, x: Var, axis: usize) -> Result<Var, NumericError> {
        let tx = self.value(x);
        let t = match (tx.shape().len(), axis) {
            (1, 0) => Tensor::scalar(logsumexp(tx.data())),
            (2, 0) => {
                let (m, n) = (tx.shape()[0], tx.shape()[1]);
                let d = tx.data();
                let out = (0..n)
                    .map(|j| {
                        let col: Vec<f64> = (0..m).map(|i| d[i * n + j]).collect();
                        logsumexp(&col)
                    })
                    .collect();
                Tensor::vector(out)
            }
            (2, 1) => Tensor::vector((0..tx.rows()).map(|i| logsumexp(tx.row(i))).collect()),
            _ => {
                return Err(NumericError::Axis {
                    op: "logsumexp",
                    shape: tx.shape().to_vec(),
                    axis,
                })
            }
        };
        let g = self.grad_flag(&[x]);
        Ok(self.push(Op::LogSumExp { x, axis }, t, g))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let g = self.grad_flag(&[x]);
        self.push(Op::Sum(x), Tensor::scalar(s), g)
    }

    /// Rows `start..end` along the leading axis (elements, for 1-D input).
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var, NumericError> {
        let tx = self.value(x);
        let lead = *tx.shape().first().unwrap_or(&1);
        if tx.shape().is_empty() || start >= end || end > lead {
            return Err(NumericError::Range {
                op: "slice_rows",
                shape: tx.shape().to_vec(),
                start,
                end,
            });
        }
        let inner: usize = tx.shape()[1..].iter().product();
        let mut shape = tx.shape().to_vec();
        shape[0] = end - start;
        let t = Tensor::new(shape, tx.data()[start * inner..end * inner].to_vec())?;
        let g = self.grad_flag(&[x]);
        Ok(self.push(Op::SliceRows { x, start }, t, g))
    }

    /// Columns `start..end` of a 2-D tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var, NumericError> {
        let tx = self.value(x);
        if tx.shape().len() != 2 || start >= end || end > tx.shape()[1] {
            return Err(NumericError::Range {
                op: "slice_cols",
                shape: tx.shape().to_vec(),
                start,
                end,
            });
        }
        let (m, n) = (tx.shape()[0], tx.shape()[1]);
        let w = end - start;
        let d = tx.data();
        let mut out = Vec::with_capacity(m * w);
        for i in 0..m {
            out.extend_from_slice(&d[i * n + start..i * n + end]);
        }
        let t = Tensor::new(vec![m, w], out)?;
        let g = self.grad_flag(&[x]);
        Ok(self.push(Op::SliceCols { x, start }, t, g))
    }

    /// Concatenation along the leading axis; trailing extents must agree.
    pub fn concat_rows(&mut self, xs: &[Var]) -> Result<Var, NumericError> {
        let first = self.value(*xs.first().ok_or(NumericError::Empty("concat_rows"))?);
        if first.shape().is_empty() {
            return Err(NumericError::Rank {
                op: "concat_rows",
                shape: vec![],
            });
        }
        let tail = first.shape()[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        for &v in xs {
            let t = self.value(v);
            if t.shape().is_empty() || t.shape()[1..] != tail[..] {
                return Err(shape_err("concat_rows", self.value(xs[0]), t));
            }
            lead += t.shape()[0];
            data.extend_from_slice(t.data());
        }
        let mut shape = vec![lead];
        shape.extend(tail);
        let t = Tensor::new(shape, data)?;
        let g = self.grad_flag(xs);
        Ok(self.push(Op::ConcatRows(xs.to_vec()), t, g))
    }

    /// Concatenation of 2-D tensors along columns; row counts must agree.
    pub fn concat_cols(&mut self, xs: &[Var]) -> Result<Var, NumericError> {
        let first = self.value(*xs.first().ok_or(NumericError::Empty("concat_cols"))?);
        let m = first.rows();
        let mut widths = Vec::with_capacity(xs.len());
        for &v in xs {
            let t = self.value(v);
            if t.shape().len() != 2 || t.shape()[0] != m {
                return Err(shape_err("concat_cols", self.value(xs[0]), t));
            }
            widths.push(t.shape()[1]);
        }
        let n: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            for &v in xs {
                data.extend_from_slice(self.value(v).row(i));
            }
        }
        let t = Tensor::new(vec![m, n], data)?;
        let g = self.grad_flag(xs);
        Ok(self.push(Op::ConcatCols(xs.to_vec()), t, g))
    }

    /// Gathers rows of a 2-D tensor into a new `rows.len() × n` tensor.
    pub fn select_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var, NumericError> {
        let tx = self.value(x);
        if tx.shape().len() != 2 || rows.is_empty() || rows.iter().any(|&r| r >= tx.shape()[0]) {
            return Err(NumericError::Index {
                op: "select_rows",
                shape: tx.shape().to_vec(),
            });
        }
        let mut data = Vec::with_capacity(rows.len() * tx.cols());
        for &r in rows {
            data.extend_from_slice(tx.row(r));
        }
        let t = Tensor::new(vec![rows.len(), tx.cols()], data)?;
        let g = self.grad_flag(&[x]);
        Ok(self.push(
            Op::SelectRows {
                x,
                rows: rows.to_vec(),
            },
            t,
            g,
        ))
    }

    /// Picks elements by flat row-major index into a 1-D tensor.
    pub fn gather(&mut self, x: Var, idx: &[usize]) -> Result<Var, NumericError> {
        let tx = self.value(x);
        if idx.is_empty() || idx.iter().any(|&i| i >= tx.len()) {
            return Err(NumericError::Index {
                op: "gather",
                shape: tx.shape().to_vec(),
            });
        }
        let d = tx.data();
        let t = Tensor::vector(idx.iter().map(|&i| d[i]).collect());
        let g = self.grad_flag(&[x]);
        Ok(self.push(
            Op::Gather {
                x,
                idx: idx.to_vec(),
            },
            t,
            g,
        ))
    }

    /// `out[i, j] = u[i] + v[j]` over the flattened elements of `u` and `v`.
    pub fn outer_add(&mut self, u: Var, v: Var) -> Var {
        let (tu, tv) = (self.value(u), self.value(v));
        let (m, n) = (tu.len(), tv.len());
        let mut data = Vec::with_capacity(m * n);
        for &a in tu.data() {
            data.extend(tv.data().iter().map(|&b| a + b));
        }
        let t = Tensor::new(vec![m, n], data).expect("non-empty");
        let g = self.grad_flag(&[u, v]);
        self.push(Op::OuterAdd(u, v), t, g)
    }

    /// Softmax across `groups` column blocks of a 2-D tensor.
    ///
    /// For a row of width `groups·w`, column `j` of every block forms one
    /// softmax group: `{j, w + j, 2w + j, ...}`.
    pub fn group_softmax(&mut self, x: Var, groups: usize) -> Result<Var, NumericError> {
        let tx = self.value(x);
        if tx.shape().len() != 2 || groups == 0 || tx.shape()[1] % groups != 0 {
            return Err(NumericError::Rank {
                op: "group_softmax",
                shape: tx.shape().to_vec(),
            });
        }
        let (m, n) = (tx.shape()[0], tx.shape()[1]);
        let w = n / groups;
        let d = tx.data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..w {
                let max = (0..groups)
                    .map(|q| d[i * n + q * w + j])
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for q in 0..groups {
                    let e = (d[i * n + q * w + j] - max).exp();
                    out[i * n + q * w + j] = e;
                    z += e;
                }
                for q in 0..groups {
                    out[i * n + q * w + j] /= z;
                }
            }
        }
        let t = Tensor::new(vec![m, n], out)?;
        let g = self.grad_flag(&[x]);
        Ok(self.push(Op::GroupSoftmax { x, groups }, t, g))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var, NumericError> {
        let t = self.value(x).clone().reshaped(shape)?;
        let g = self.grad_flag(&[x]);
        Ok(self.push(Op::Reshape(x), t, g))
    }

    /// Reverse sweep from a scalar `loss`; returns per-node gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumericError> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(NumericError::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(gout) = grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.propagate(i, &gout, &mut grads);
            grads[i] = Some(gout);
        }
        Ok(Gradients { grads })
    }

    /// Gradient of `loss` for every parameter in `store`; parameters
    /// absent from the tape get zeros.
    pub fn backward_params(
        &self,
        loss: Var,
        store: &ParamStore,
    ) -> Result<ParamGrads, NumericError> {
        let grads = self.backward(loss)?;
        let mut out = ParamGrads::zeros_like(store);
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (&node.op, &grads.grads[i]) {
                for (o, v) in out.get_mut(*id).data_mut().iter_mut().zip(g) {
                    *o += v;
                }
            }
        }
        Ok(out)
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = self.value(Var(i));
        match &node.op {
            Op::Constant | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if self.wants(*a) {
                    // da = g · bᵀ
                    let da = acc_into(&mut grads[a.0], m * k);
                    let bd = tb.data();
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let brow = &bd[p * n..(p + 1) * n];
                            let s: f64 = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                            da[r * k + p] += s;
                        }
                    }
                }
                if self.wants(*b) {
                    // db = aᵀ · g
                    let db = acc_into(&mut grads[b.0], k * n);
                    let ad = ta.data();
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let av = ad[r * k + p];
                            if av == 0.0 {
                                continue;
                            }
                            for (o, &gv) in db[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *o += av * gv;
                            }
                        }
                    }
                }
            }
            Op::Transpose(a) => {
                let (m, n) = (out.shape()[1], out.shape()[0]);
                let da = acc_into(&mut grads[a.0], m * n);
                for r in 0..m {
                    for c in 0..n {
                        da[r * n + c] += g[c * m + r];
                    }
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                self.reduce_broadcast(*a, g, 1.0, grads);
                self.reduce_broadcast(*b, g, sign, grads);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    let ga: Vec<f64> = (0..g.len()).map(|j| g[j] * bcast(tb, j)).collect();
                    self.reduce_broadcast(*a, &ga, 1.0, grads);
                }
                if self.wants(*b) {
                    let gb: Vec<f64> = (0..g.len()).map(|j| g[j] * bcast(ta, j)).collect();
                    self.reduce_broadcast(*b, &gb, 1.0, grads);
                }
            }
            Op::Scale(a, c) => {
                let da = acc_into(&mut grads[a.0], g.len());
                for (o, &v) in da.iter_mut().zip(g) {
                    *o += c * v;
                }
            }
            Op::AddRow(x, b) => {
                if self.wants(*x) {
                    let dx = acc_into(&mut grads[x.0], g.len());
                    for (o, &v) in dx.iter_mut().zip(g) {
                        *o += v;
                    }
                }
                if self.wants(*b) {
                    let n = self.value(*b).len();
                    let db = acc_into(&mut grads[b.0], n);
                    for (j, &v) in g.iter().enumerate() {
                        db[j % n] += v;
                    }
                }
            }
            Op::Unary(a, f) => {
                let ta = self.value(*a);
                let da = acc_into(&mut grads[a.0], g.len());
                for j in 0..g.len() {
                    da[j] += g[j] * f.derivative(ta.data()[j], out.data()[j]);
                }
            }
            Op::LogSumExp { x, axis } => {
                let tx = self.value(*x);
                let d = tx.data();
                let o = out.data();
                let dx = acc_into(&mut grads[x.0], d.len());
                let weight = |xv: f64, ov: f64| {
                    if ov == f64::NEG_INFINITY {
                        0.0
                    } else {
                        (xv - ov).exp()
                    }
                };
                match (tx.shape().len(), *axis) {
                    (1, _) => {
                        for j in 0..d.len() {
                            dx[j] += g[0] * weight(d[j], o[0]);
                        }
                    }
                    (_, 0) => {
                        let n = tx.shape()[1];
                        for j in 0..d.len() {
                            dx[j] += g[j % n] * weight(d[j], o[j % n]);
                        }
                    }
                    _ => {
                        let n = tx.shape()[1];
                        for j in 0..d.len() {
                            dx[j] += g[j / n] * weight(d[j], o[j / n]);
                        }
                    }
                }
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                let dx = acc_into(&mut grads[x.0], n);
                for o in dx.iter_mut() {
                    *o += g[0];
                }
            }
            Op::SliceRows { x, start } => {
                let tx = self.value(*x);
                let inner: usize = tx.shape()[1..].iter().product();
                let dx = acc_into(&mut grads[x.0], tx.len());
                let off = start * inner;
                for (o, &v) in dx[off..off + g.len()].iter_mut().zip(g) {
                    *o += v;
                }
            }
            Op::SliceCols { x, start } => {
                let tx = self.value(*x);
                let (m, n) = (tx.shape()[0], tx.shape()[1]);
                let w = out.shape()[1];
                let dx = acc_into(&mut grads[x.0], m * n);
                for r in 0..m {
                    for c in 0..w {
                        dx[r * n + start + c] += g[r * w + c];
                    }
                }
            }
            Op::ConcatRows(xs) => {
                let mut off = 0;
                for v in xs {
                    let len = self.value(*v).len();
                    if self.wants(*v) {
                        let dv = acc_into(&mut grads[v.0], len);
                        for (o, &gv) in dv.iter_mut().zip(&g[off..off + len]) {
                            *o += gv;
                        }
                    }
                    off += len;
                }
            }
            Op::ConcatCols(xs) => {
                let m = out.shape()[0];
                let n = out.shape()[1];
                let mut col = 0;
                for v in xs {
                    let w = self.value(*v).shape()[1];
                    if self.wants(*v) {
                        let dv = acc_into(&mut grads[v.0], m * w);
                        for r in 0..m {
                            for c in 0..w {
                                dv[r * w + c] += g[r * n + col + c];
                            }
                        }
                    }
                    col += w;
                }
            }
            Op::SelectRows { x, rows } => {
                let tx = self.value(*x);
                let n = tx.cols();
                let dx = acc_into(&mut grads[x.0], tx.len());
                for (q, &r) in rows.iter().enumerate() {
                    for c in 0..n {
                        dx[r * n + c] += g[q * n + c];
                    }
                }
            }
            Op::Gather { x, idx } => {
                let len = self.value(*x).len();
                let dx = acc_into(&mut grads[x.0], len);
                for (q, &k) in idx.iter().enumerate() {
                    dx[k] += g[q];
                }
            }
            Op::OuterAdd(u, v) => {
                let (m, n) = (out.shape()[0], out.shape()[1]);
                if self.wants(*u) {
                    let du = acc_into(&mut grads[u.0], m);
                    for r in 0..m {
                        du[r] += g[r * n..(r + 1) * n].iter().sum::<f64>();
                    }
                }
                if self.wants(*v) {
                    let dv = acc_into(&mut grads[v.0], n);
                    for r in 0..m {
                        for c in 0..n {
                            dv[c] += g[r * n + c];
                        }
                    }
                }
            }
            Op::GroupSoftmax { x, groups } => {
                let (m, n) = (out.shape()[0], out.shape()[1]);
                let w = n / groups;
                let s = out.data();
                let dx = acc_into(&mut grads[x.0], m * n);
                for r in 0..m {
                    for j in 0..w {
                        let dot: f64 = (0..*groups)
                            .map(|q| {
                                let k = r * n + q * w + j;
                                s[k] * g[k]
                            })
                            .sum();
                        for q in 0..*groups {
                            let k = r * n + q * w + j;
                            dx[k] += s[k] * (g[k] - dot);
                        }
                    }
                }
            }
            Op::Reshape(x) => {
                let dx = acc_into(&mut grads[x.0], g.len());
                for (o, &v) in dx.iter_mut().zip(g) {
                    *o += v;
                }
            }
        }
    }

    /// Accumulates `sign·g` into `v`, summing down when `v` is a broadcast scalar.
    fn reduce_broadcast(&self, v: Var, g: &[f64], sign: f64, grads: &mut [Option<Vec<f64>>]) {
        if !self.wants(v) {
            return;
        }
        let len = self.value(v).len();
        let dv = acc_into(&mut grads[v.0], len);
        if len == g.len() {
            for (o, &x) in dv.iter_mut().zip(g) {
                *o += sign * x;
            }
        } else {
            dv[0] += sign * g.iter().sum::<f64>();
        }
    }
}

fn bcast(t: &Tensor, j: usize) -> f64 {
    if t.len() == 1 {
        t.data()[0]
    } else {
        t.data()[j]
    }
}

/// Result of a reverse sweep: one optional gradient buffer per node.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient with respect to `v`, or `None` when `v` does not influence the loss.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}
