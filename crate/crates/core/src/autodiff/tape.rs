//! Tape-based reverse-mode differentiation over dense tensors.
//!
//! A [`Tape`] is rebuilt for every forward evaluation. Nodes are appended in
//! evaluation order, so the node list is always topologically sorted and a
//! single reverse sweep visits every node after all of its consumers.

use std::collections::BTreeMap;

use super::tensor::{matmul_nt, matmul_raw, matmul_tn, Tensor};
use super::AdError;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Param(String),
    Omega,
    Constant,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    MatMul(usize, usize),
    Tanh(usize),
    Relu(usize),
    Sin(usize),
    Cos(usize),
    Exp(usize),
    Log(usize),
    Sigmoid(usize),
    /// Column-wise max over rows; stores the winning row per column.
    MaxRows(usize, Vec<usize>),
    /// Row-wise min over columns; stores the winning column per row.
    MinCols(usize, Vec<usize>),
    Sum(usize),
    Softmax(usize),
    LogSoftmax(usize),
    SquaredNorm(usize),
    Select(usize, usize),
    Stack(Vec<usize>),
    Reshape(usize),
    AddRow(usize, usize),
    ConcatBroadcast(usize, usize),
    PairwiseSqDist(usize, usize),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Param(_) => "param",
            Op::Omega => "omega",
            Op::Constant => "constant",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::MatMul(..) => "matmul",
            Op::Tanh(_) => "tanh",
            Op::Relu(_) => "relu",
            Op::Sin(_) => "sin",
            Op::Cos(_) => "cos",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Sigmoid(_) => "sigmoid",
            Op::MaxRows(..) => "max_rows",
            Op::MinCols(..) => "min_cols",
            Op::Sum(_) => "sum",
            Op::Softmax(_) => "softmax",
            Op::LogSoftmax(_) => "log_softmax",
            Op::SquaredNorm(_) => "squared_norm",
            Op::Select(..) => "select",
            Op::Stack(_) => "stack",
            Op::Reshape(_) => "reshape",
            Op::AddRow(..) => "add_row",
            Op::ConcatBroadcast(..) => "concat_broadcast",
            Op::PairwiseSqDist(..) => "pairwise_sq_dist",
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Gradients of the loss with respect to every parameter leaf and the
/// prediction leaf.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub params: BTreeMap<String, Tensor>,
    pub omega: Option<Vec<f64>>,
}

impl Gradients {
    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }
}

/// Record of one differentiable forward evaluation.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    loss: Option<usize>,
    consumed: bool,
}

fn same_len_or_scalar(a: &Tensor, b: &Tensor) -> bool {
    a.shape() == b.shape() || a.len() == 1 || b.len() == 1
}

/// Reduce a broadcast gradient back onto an operand of numel 1.
fn reduce_to(grad: &Tensor, target: &Tensor) -> Tensor {
    if grad.shape() == target.shape() {
        grad.clone()
    } else {
        let mut t = Tensor::zeros(target.shape().to_vec());
        t.data_mut()[0] = grad.data().iter().sum();
        t
    }
}

fn broadcast_zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    if a.shape() == b.shape() {
        a.zip(b, f)
    } else if b.len() == 1 {
        let s = b.data()[0];
        a.map(|x| f(x, s))
    } else {
        let s = a.data()[0];
        b.map(|y| f(s, y))
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    fn push(&mut self, op: Op, value: Tensor) -> Result<Var, AdError> {
        let idx = self.nodes.len();
        if !value.is_finite() {
            return Err(AdError::NonFinite { node: idx, op: op.name() });
        }
        self.nodes.push(Node { op, value });
        Ok(Var(idx))
    }

    fn mismatch(&self, op: &'static str, detail: String) -> AdError {
        AdError::ShapeMismatch { node: Some(self.nodes.len()), op, detail }
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub(crate) fn param_leaf(&mut self, name: &str, value: Tensor) -> Result<Var, AdError> {
        self.push(Op::Param(name.to_string()), value)
    }

    pub(crate) fn omega_leaf(&mut self, values: &[f64]) -> Result<Var, AdError> {
        self.push(Op::Omega, Tensor::vector(values.to_vec()))
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var, AdError> {
        self.push(Op::Constant, value)
    }

    pub fn constant_scalar(&mut self, value: f64) -> Result<Var, AdError> {
        self.push(Op::Constant, Tensor::scalar(value))
    }

    pub fn constant_vector(&mut self, values: &[f64]) -> Result<Var, AdError> {
        self.push(Op::Constant, Tensor::vector(values.to_vec()))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let (x, y) = (self.val(a), self.val(b));
        if !same_len_or_scalar(x, y) {
            return Err(self.mismatch("add", format!("{:?} vs {:?}", x.shape(), y.shape())));
        }
        let out = broadcast_zip(x, y, |p, q| p + q);
        self.push(Op::Add(a.0, b.0), out)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let (x, y) = (self.val(a), self.val(b));
        if !same_len_or_scalar(x, y) {
            return Err(self.mismatch("sub", format!("{:?} vs {:?}", x.shape(), y.shape())));
        }
        let out = broadcast_zip(x, y, |p, q| p - q);
        self.push(Op::Sub(a.0, b.0), out)
    }

    /// Elementwise product; either operand may be a one-element tensor.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let (x, y) = (self.val(a), self.val(b));
        if !same_len_or_scalar(x, y) {
            return Err(self.mismatch("mul", format!("{:?} vs {:?}", x.shape(), y.shape())));
        }
        let out = broadcast_zip(x, y, |p, q| p * q);
        self.push(Op::Mul(a.0, b.0), out)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, AdError> {
        let out = self.val(a).map(|v| v * c);
        self.push(Op::Scale(a.0, c), out)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var, AdError> {
        self.scale(a, -1.0)
    }

    /// Matrix product. Rank-1 operands are treated as `1 x n` rows.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let (x, y) = (self.val(a), self.val(b));
        let (Some((m, k)), Some((k2, n))) = (x.as_matrix_dims(), y.as_matrix_dims()) else {
            return Err(self.mismatch("matmul", "operands must be rank 1 or 2".into()));
        };
        if k != k2 {
            return Err(self.mismatch("matmul", format!("{:?} x {:?}", x.shape(), y.shape())));
        }
        let data = matmul_raw(x.data(), y.data(), m, k, n);
        self.push(Op::MatMul(a.0, b.0), Tensor::new(vec![m, n], data)?)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, AdError> {
        let out = self.val(a).map(f64::tanh);
        self.push(Op::Tanh(a.0), out)
    }

    /// `max(0, x)`; the subgradient at 0 is taken as 0.
    pub fn relu(&mut self, a: Var) -> Result<Var, AdError> {
        let out = self.val(a).map(|v| if v > 0.0 { v } else { 0.0 });
        self.push(Op::Relu(a.0), out)
    }

    pub fn sin(&mut self, a: Var) -> Result<Var, AdError> {
        let out = self.val(a).map(f64::sin);
        self.push(Op::Sin(a.0), out)
    }

    pub fn cos(&mut self, a: Var) -> Result<Var, AdError> {
        let out = self.val(a).map(f64::cos);
        self.push(Op::Cos(a.0), out)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, AdError> {
        let out = self.val(a).map(f64::exp);
        self.push(Op::Exp(a.0), out)
    }

    pub fn log(&mut self, a: Var) -> Result<Var, AdError> {
        let out = self.val(a).map(f64::ln);
        self.push(Op::Log(a.0), out)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, AdError> {
        let out = self.val(a).map(|v| 1.0 / (1.0 + (-v).exp()));
        self.push(Op::Sigmoid(a.0), out)
    }

    /// Column-wise max over the rows of an `m x n` matrix, giving `1 x n`.
    /// Ties resolve to the lowest row index.
    pub fn max_rows(&mut self, a: Var) -> Result<Var, AdError> {
        let x = self.val(a);
        let Some((m, n)) = x.as_matrix_dims() else {
            return Err(self.mismatch("max_rows", format!("{:?}", x.shape())));
        };
        if m == 0 {
            return Err(self.mismatch("max_rows", "empty matrix".into()));
        }
        let d = x.data();
        let mut arg = vec![0usize; n];
        let mut out = vec![0.0; n];
        for j in 0..n {
            let mut best = d[j];
            for i in 1..m {
                if d[i * n + j] > best {
                    best = d[i * n + j];
                    arg[j] = i;
                }
            }
            out[j] = best;
        }
        self.push(Op::MaxRows(a.0, arg), Tensor::new(vec![1, n], out)?)
    }

    /// Row-wise min over the columns of an `m x n` matrix, giving `m x 1`.
    /// Ties resolve to the lowest column index.
    pub fn min_cols(&mut self, a: Var) -> Result<Var, AdError> {
        let x = self.val(a);
        let Some((m, n)) = x.as_matrix_dims() else {
            return Err(self.mismatch("min_cols", format!("{:?}", x.shape())));
        };
        if n == 0 {
            return Err(self.mismatch("min_cols", "empty matrix".into()));
        }
        let d = x.data();
        let mut arg = vec![0usize; m];
        let mut out = vec![0.0; m];
        for i in 0..m {
            let row = &d[i * n..(i + 1) * n];
            let mut best = row[0];
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v < best {
                    best = v;
                    arg[i] = j;
                }
            }
            out[i] = best;
        }
        self.push(Op::MinCols(a.0, arg), Tensor::new(vec![m, 1], out)?)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, AdError> {
        let s = self.val(a).data().iter().sum();
        self.push(Op::Sum(a.0), Tensor::scalar(s))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, AdError> {
        let n = self.val(a).len();
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Softmax over all entries.
    pub fn softmax(&mut self, a: Var) -> Result<Var, AdError> {
        let x = self.val(a);
        if x.is_empty() {
            return Err(self.mismatch("softmax", "empty input".into()));
        }
        let max = x.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps = x.map(|v| (v - max).exp());
        let z: f64 = exps.data().iter().sum();
        let out = exps.map(|v| v / z);
        self.push(Op::Softmax(a.0), out)
    }

    /// `x - logsumexp(x)` over all entries, stable for saturated inputs.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var, AdError> {
        let x = self.val(a);
        if x.is_empty() {
            return Err(self.mismatch("log_softmax", "empty input".into()));
        }
        let max = x.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + x.data().iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let out = x.map(|v| v - lse);
        self.push(Op::LogSoftmax(a.0), out)
    }

    pub fn squared_norm(&mut self, a: Var) -> Result<Var, AdError> {
        let s = self.val(a).data().iter().map(|v| v * v).sum();
        self.push(Op::SquaredNorm(a.0), Tensor::scalar(s))
    }

    /// Picks one entry (flat index) as a scalar.
    pub fn select(&mut self, a: Var, index: usize) -> Result<Var, AdError> {
        let x = self.val(a);
        if index >= x.len() {
            return Err(self.mismatch("select", format!("index {} of {}", index, x.len())));
        }
        let v = x.data()[index];
        self.push(Op::Select(a.0, index), Tensor::scalar(v))
    }

    /// Assembles one-element nodes into a tensor of the given shape.
    pub fn stack(&mut self, parts: &[Var], shape: Vec<usize>) -> Result<Var, AdError> {
        let expected: usize = shape.iter().product();
        if expected != parts.len() {
            return Err(self.mismatch("stack", format!("{} parts for shape {:?}", parts.len(), shape)));
        }
        let mut data = Vec::with_capacity(parts.len());
        for p in parts {
            let x = self.val(*p);
            if x.len() != 1 {
                return Err(self.mismatch("stack", format!("part {:?} is not a scalar", x.shape())));
            }
            data.push(x.data()[0]);
        }
        let t = Tensor::new(shape, data)?;
        self.push(Op::Stack(parts.iter().map(|v| v.0).collect()), t)
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var, AdError> {
        let x = self.val(a);
        let t = Tensor::new(shape, x.data().to_vec())
            .map_err(|_| self.mismatch("reshape", format!("{:?}", x.shape())))?;
        self.push(Op::Reshape(a.0), t)
    }

    /// Adds a length-`n` row to every row of an `m x n` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, AdError> {
        let (x, r) = (self.val(a), self.val(row));
        let Some((m, n)) = x.as_matrix_dims() else {
            return Err(self.mismatch("add_row", format!("{:?}", x.shape())));
        };
        if r.len() != n {
            return Err(self.mismatch("add_row", format!("{:?} + row {:?}", x.shape(), r.shape())));
        }
        let mut out = x.data().to_vec();
        for i in 0..m {
            for (o, &b) in out[i * n..(i + 1) * n].iter_mut().zip(r.data()) {
                *o += b;
            }
        }
        self.push(Op::AddRow(a.0, row.0), Tensor::new(vec![m, n], out)?)
    }

    /// `[a | g]` where the single row `g` is repeated for every row of `a`.
    pub fn concat_broadcast(&mut self, a: Var, g: Var) -> Result<Var, AdError> {
        let (x, y) = (self.val(a), self.val(g));
        let (Some((m, p)), Some((1, q))) = (x.as_matrix_dims(), y.as_matrix_dims()) else {
            return Err(self.mismatch("concat_broadcast", format!("{:?} | {:?}", x.shape(), y.shape())));
        };
        let mut out = Vec::with_capacity(m * (p + q));
        for i in 0..m {
            out.extend_from_slice(&x.data()[i * p..(i + 1) * p]);
            out.extend_from_slice(y.data());
        }
        self.push(Op::ConcatBroadcast(a.0, g.0), Tensor::new(vec![m, p + q], out)?)
    }

    /// `D[i][j] = ||a_i - b_j||^2` for `a: m x k`, `b: n x k`.
    pub fn pairwise_sq_dist(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let (x, y) = (self.val(a), self.val(b));
        let (Some((m, k)), Some((n, k2))) = (x.as_matrix_dims(), y.as_matrix_dims()) else {
            return Err(self.mismatch("pairwise_sq_dist", "operands must be matrices".into()));
        };
        if k != k2 {
            return Err(self.mismatch("pairwise_sq_dist", format!("{:?} vs {:?}", x.shape(), y.shape())));
        }
        let (xd, yd) = (x.data(), y.data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] = (0..k).map(|c| (xd[i * k + c] - yd[j * k + c]).powi(2)).sum();
            }
        }
        self.push(Op::PairwiseSqDist(a.0, b.0), Tensor::new(vec![m, n], out)?)
    }

    pub(crate) fn set_loss(&mut self, v: Var) -> Result<(), AdError> {
        if self.val(v).len() != 1 {
            return Err(AdError::NonScalarLoss { shape: self.val(v).shape().to_vec() });
        }
        self.loss = Some(v.0);
        Ok(())
    }

    pub fn loss(&self) -> Option<Var> {
        self.loss.map(Var)
    }

    /// Activation pattern of every non-smooth node: relu signs and the
    /// winning indices of max/min reductions. Two evaluations with equal
    /// signatures lie on the same smooth piece.
    pub fn kink_signature(&self) -> Vec<usize> {
        let mut sig = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(a) => {
                    sig.extend(self.nodes[*a].value.data().iter().map(|&v| usize::from(v > 0.0)));
                }
                Op::MaxRows(_, arg) | Op::MinCols(_, arg) => sig.extend_from_slice(arg),
                _ => {}
            }
        }
        sig
    }

    /// Smallest `|input|` over all relu nodes (infinity if there are none).
    pub fn min_relu_margin(&self) -> f64 {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(a) => Some(self.nodes[a].value.data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))),
                _ => None,
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Reverse sweep from the loss node. A tape can be swept once.
    pub fn backward(&mut self) -> Result<Gradients, AdError> {
        if self.consumed {
            return Err(AdError::TapeConsumed);
        }
        let Some(loss) = self.loss else {
            return Err(AdError::NoLoss);
        };
        self.consumed = true;

        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        let mut seed = Tensor::zeros(self.nodes[loss].value.shape().to_vec());
        seed.data_mut()[0] = 1.0;
        grads[loss] = Some(seed);

        fn acc(grads: &mut [Option<Tensor>], idx: usize, g: Tensor) {
            match &mut grads[idx] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=loss).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let y = &node.value;
            match &node.op {
                Op::Param(_) | Op::Omega | Op::Constant => {
                    grads[idx] = Some(g);
                }
                Op::Add(a, b) => {
                    let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    acc(&mut grads, *a, reduce_to(&g, va));
                    acc(&mut grads, *b, reduce_to(&g, vb));
                }
                Op::Sub(a, b) => {
                    let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    acc(&mut grads, *a, reduce_to(&g, va));
                    acc(&mut grads, *b, reduce_to(&g.map(|v| -v), vb));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    let ga = broadcast_zip(&g, vb, |p, q| p * q);
                    let gb = broadcast_zip(&g, va, |p, q| p * q);
                    acc(&mut grads, *a, reduce_to(&ga, va));
                    acc(&mut grads, *b, reduce_to(&gb, vb));
                }
                Op::Scale(a, c) => acc(&mut grads, *a, g.map(|v| v * c)),
                Op::MatMul(a, b) => {
                    let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    let (m, k) = va.as_matrix_dims().expect("checked in forward");
                    let (_, n) = vb.as_matrix_dims().expect("checked in forward");
                    let ga = matmul_nt(g.data(), vb.data(), m, n, k);
                    let gb = matmul_tn(va.data(), g.data(), m, k, n);
                    acc(&mut grads, *a, Tensor::new(va.shape().to_vec(), ga)?);
                    acc(&mut grads, *b, Tensor::new(vb.shape().to_vec(), gb)?);
                }
                Op::Tanh(a) => acc(&mut grads, *a, g.zip(y, |gv, yv| gv * (1.0 - yv * yv))),
                Op::Relu(a) => {
                    let x = &self.nodes[*a].value;
                    acc(&mut grads, *a, g.zip(x, |gv, xv| if xv > 0.0 { gv } else { 0.0 }));
                }
                Op::Sin(a) => {
                    let x = &self.nodes[*a].value;
                    acc(&mut grads, *a, g.zip(x, |gv, xv| gv * xv.cos()));
                }
                Op::Cos(a) => {
                    let x = &self.nodes[*a].value;
                    acc(&mut grads, *a, g.zip(x, |gv, xv| -gv * xv.sin()));
                }
                Op::Exp(a) => acc(&mut grads, *a, g.zip(y, |gv, yv| gv * yv)),
                Op::Log(a) => {
                    let x = &self.nodes[*a].value;
                    acc(&mut grads, *a, g.zip(x, |gv, xv| gv / xv));
                }
                Op::Sigmoid(a) => acc(&mut grads, *a, g.zip(y, |gv, yv| gv * yv * (1.0 - yv))),
                Op::MaxRows(a, arg) => {
                    let x = &self.nodes[*a].value;
                    let (_, n) = x.as_matrix_dims().expect("checked in forward");
                    let mut ga = Tensor::zeros(x.shape().to_vec());
                    for (j, &i) in arg.iter().enumerate() {
                        ga.data_mut()[i * n + j] += g.data()[j];
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::MinCols(a, arg) => {
                    let x = &self.nodes[*a].value;
                    let (_, n) = x.as_matrix_dims().expect("checked in forward");
                    let mut ga = Tensor::zeros(x.shape().to_vec());
                    for (i, &j) in arg.iter().enumerate() {
                        ga.data_mut()[i * n + j] += g.data()[i];
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let x = &self.nodes[*a].value;
                    let gv = g.data()[0];
                    acc(&mut grads, *a, x.map(|_| gv));
                }
                Op::Softmax(a) => {
                    let dot: f64 = g.data().iter().zip(y.data()).map(|(p, q)| p * q).sum();
                    acc(&mut grads, *a, g.zip(y, |gv, yv| yv * (gv - dot)));
                }
                Op::LogSoftmax(a) => {
                    let total: f64 = g.data().iter().sum();
                    acc(&mut grads, *a, g.zip(y, |gv, yv| gv - yv.exp() * total));
                }
                Op::SquaredNorm(a) => {
                    let x = &self.nodes[*a].value;
                    let gv = g.data()[0];
                    acc(&mut grads, *a, x.map(|v| 2.0 * v * gv));
                }
                Op::Select(a, i) => {
                    let x = &self.nodes[*a].value;
                    let mut ga = Tensor::zeros(x.shape().to_vec());
                    ga.data_mut()[*i] = g.data()[0];
                    acc(&mut grads, *a, ga);
                }
                Op::Stack(parts) => {
                    for (k, p) in parts.iter().enumerate() {
                        let shape = self.nodes[*p].value.shape().to_vec();
                        acc(&mut grads, *p, Tensor::new(shape, vec![g.data()[k]])?);
                    }
                }
                Op::Reshape(a) => {
                    let shape = self.nodes[*a].value.shape().to_vec();
                    acc(&mut grads, *a, Tensor::new(shape, g.data().to_vec())?);
                }
                Op::AddRow(a, r) => {
                    let vr = &self.nodes[*r].value;
                    let n = vr.len();
                    let mut gr = Tensor::zeros(vr.shape().to_vec());
                    for row in g.data().chunks(n) {
                        for (o, v) in gr.data_mut().iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                    let shape = self.nodes[*a].value.shape().to_vec();
                    acc(&mut grads, *a, Tensor::new(shape, g.data().to_vec())?);
                    acc(&mut grads, *r, gr);
                }
                Op::ConcatBroadcast(a, gl) => {
                    let va = &self.nodes[*a].value;
                    let vg = &self.nodes[*gl].value;
                    let (m, p) = va.as_matrix_dims().expect("checked in forward");
                    let q = vg.len();
                    let mut ga = Vec::with_capacity(m * p);
                    let mut gg = Tensor::zeros(vg.shape().to_vec());
                    for row in g.data().chunks(p + q) {
                        ga.extend_from_slice(&row[..p]);
                        for (o, v) in gg.data_mut().iter_mut().zip(&row[p..]) {
                            *o += v;
                        }
                    }
                    acc(&mut grads, *a, Tensor::new(va.shape().to_vec(), ga)?);
                    acc(&mut grads, *gl, gg);
                }
                Op::PairwiseSqDist(a, b) => {
                    let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    let (m, k) = va.as_matrix_dims().expect("checked in forward");
                    let (n, _) = vb.as_matrix_dims().expect("checked in forward");
                    let (xd, yd) = (va.data(), vb.data());
                    let mut ga = Tensor::zeros(va.shape().to_vec());
                    let mut gb = Tensor::zeros(vb.shape().to_vec());
                    for i in 0..m {
                        for j in 0..n {
                            let gij = g.data()[i * n + j];
                            if gij == 0.0 {
                                continue;
                            }
                            for c in 0..k {
                                let d = 2.0 * gij * (xd[i * k + c] - yd[j * k + c]);
                                ga.data_mut()[i * k + c] += d;
                                gb.data_mut()[j * k + c] -= d;
                            }
                        }
                    }
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
            }
        }

        let mut params = BTreeMap::new();
        let mut omega = None;
        for (idx, node) in self.nodes.iter().enumerate() {
            match &node.op {
                Op::Param(name) => {
                    let g = grads[idx].take().unwrap_or_else(|| Tensor::zeros(node.value.shape().to_vec()));
                    if !g.is_finite() {
                        return Err(AdError::NonFinite { node: idx, op: "gradient" });
                    }
                    params.insert(name.clone(), g);
                }
                Op::Omega => {
                    let g = grads[idx].take().unwrap_or_else(|| Tensor::zeros(node.value.shape().to_vec()));
                    if !g.is_finite() {
                        return Err(AdError::NonFinite { node: idx, op: "gradient" });
                    }
                    omega = Some(g.into_data());
                }
                _ => {}
            }
        }
        Ok(Gradients { params, omega })
    }
}
