//! Reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! A [`Graph`] is an append-only tape: every operation evaluates eagerly and
//! records its inputs, so node indices are already a topological order and
//! the graph cannot contain cycles. The backward sweep is itself expressed
//! with graph operations, which means the gradients returned by
//! [`Graph::grad`] are ordinary nodes that can be differentiated again. The
//! gradient penalty of a WGAN-GP critic needs exactly that: a loss on
//! `‖∇ₓD(x)‖` whose gradient with respect to the critic weights goes through
//! the first backward pass.
//!
//! Nodes created with [`Graph::constant`] never receive gradients, and
//! nothing downstream of only constants is differentiated.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    LeakyRelu(Var, f64),
    Relu(Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize),
    PadCols(Var, usize),
    Exp(Var),
    Ln(Var),
    Sqrt(Var),
    Square(Var),
    RecipOrZero(Var),
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    SumCols(Var),
    BroadcastRows(Var),
    BroadcastCols(Var),
    BroadcastScalar(Var),
    SoftmaxRows(Var),
    SoftmaxCrossEntropy(Var, Vec<usize>),
}

#[derive(Clone, Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Gradients of a scalar root, keyed by the variables they were requested for.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    map: BTreeMap<Var, Matrix>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.map.get(&v)
    }

    /// Gradient for `v`; panics if it was not requested.
    pub fn of(&self, v: Var) -> &Matrix {
        self.map.get(&v).expect("gradient was not requested for this variable")
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, &Matrix)> {
        self.map.iter().map(|(v, m)| (*v, m))
    }
}

#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A leaf that gradients can be taken with respect to.
    pub fn variable(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that is treated as a fixed input.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> Result<f64> {
        self.value(v).scalar_value()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn derived(&mut self, value: Matrix, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(op_name(&op)));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(value, op, requires_grad))
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        self.derived(value, Op::MatMul(a, b), &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose();
        self.derived(value, Op::Transpose(a), &[a])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        self.derived(value, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        self.derived(value, Op::Sub(a, b), &[a, b])
    }

    /// Adds a `1 × m` bias row to every row of an `n × m` input.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(bias);
        if br != 1 || bc != ac {
            return Err(Error::dim("add_bias", format!("bias {br}x{bc} for input {ar}x{ac}")));
        }
        let b = self.value(bias).data().to_vec();
        let value = Matrix::from_fn(ar, ac, |r, c| self.value(a).get(r, c) + b[c]);
        self.derived(value, Op::AddBias(a, bias), &[a, bias])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hadamard(self.value(b))?;
        self.derived(value, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let value = self.value(a).scale(c);
        self.derived(value, Op::Scale(a, c), &[a])
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let value = self.value(a).map(|v| v + c);
        self.derived(value, Op::AddScalar(a), &[a])
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        let value = self.value(a).map(|v| if v > 0.0 { v } else { slope * v });
        self.derived(value, Op::LeakyRelu(a, slope), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|v| v.max(0.0));
        self.derived(value, Op::Relu(a), &[a])
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).concat_cols(self.value(b))?;
        self.derived(value, Op::ConcatCols(a, b), &[a, b])
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let value = self.value(a).slice_cols(start, end)?;
        self.derived(value, Op::SliceCols(a, start), &[a])
    }

    /// Surrounds the columns of `a` with `left` and `right` zero columns.
    pub fn pad_cols(&mut self, a: Var, left: usize, right: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        let value = Matrix::from_fn(r, left + c + right, |i, j| {
            if j >= left && j < left + c {
                self.value(a).get(i, j - left)
            } else {
                0.0
            }
        });
        self.derived(value, Op::PadCols(a, left), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(f64::exp);
        self.derived(value, Op::Exp(a), &[a])
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        if let Some(v) = self.value(a).data().iter().find(|v| **v <= 0.0) {
            return Err(Error::domain("ln", format!("argument {v} is not positive")));
        }
        let value = self.value(a).map(f64::ln);
        self.derived(value, Op::Ln(a), &[a])
    }

    /// Square root. Zero is accepted and its derivative is taken as 0.
    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        if let Some(v) = self.value(a).data().iter().find(|v| **v < 0.0) {
            return Err(Error::domain("sqrt", format!("argument {v} is negative")));
        }
        let value = self.value(a).map(f64::sqrt);
        self.derived(value, Op::Sqrt(a), &[a])
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|v| v * v);
        self.derived(value, Op::Square(a), &[a])
    }

    /// `1 / a` elementwise, with `0` where `a == 0`.
    pub fn recip_or_zero(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|v| if v == 0.0 { 0.0 } else { 1.0 / v });
        self.derived(value, Op::RecipOrZero(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Matrix::scalar(self.value(a).sum());
        self.derived(value, Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        if self.value(a).is_empty() {
            return Err(Error::dim("mean", "empty input"));
        }
        let value = Matrix::scalar(self.value(a).mean());
        self.derived(value, Op::Mean(a), &[a])
    }

    /// Column sums: `n × m → 1 × m`.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).sum_rows();
        self.derived(value, Op::SumRows(a), &[a])
    }

    /// Row sums: `n × m → n × 1`.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).sum_cols();
        self.derived(value, Op::SumCols(a), &[a])
    }

    pub fn broadcast_rows(&mut self, a: Var, rows: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if r != 1 {
            return Err(Error::dim("broadcast_rows", format!("expected one row, got {r}x{c}")));
        }
        let value = Matrix::from_fn(rows, c, |_, j| self.value(a).get(0, j));
        self.derived(value, Op::BroadcastRows(a), &[a])
    }

    pub fn broadcast_cols(&mut self, a: Var, cols: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if c != 1 {
            return Err(Error::dim("broadcast_cols", format!("expected one column, got {r}x{c}")));
        }
        let value = Matrix::from_fn(r, cols, |i, _| self.value(a).get(i, 0));
        self.derived(value, Op::BroadcastCols(a), &[a])
    }

    pub fn broadcast_scalar(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let v = self.scalar(a)?;
        self.derived(Matrix::filled(rows, cols, v), Op::BroadcastScalar(a), &[a])
    }

    /// Row-wise softmax.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let value = softmax_rows(self.value(a));
        self.derived(value, Op::SoftmaxRows(a), &[a])
    }

    /// Mean negative log-likelihood of `targets` under the row-wise softmax
    /// of `logits`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let m = self.value(logits);
        if targets.len() != m.rows() || m.rows() == 0 {
            return Err(Error::dim(
                "softmax_cross_entropy",
                format!("{} targets for {} rows", targets.len(), m.rows()),
            ));
        }
        if let Some(t) = targets.iter().find(|t| **t >= m.cols()) {
            return Err(Error::dim("softmax_cross_entropy", format!("target {t} outside {} classes", m.cols())));
        }
        let mut total = 0.0;
        for (row, &t) in m.iter_rows().zip(targets) {
            total += log_sum_exp(row) - row[t];
        }
        let value = Matrix::scalar(total / targets.len() as f64);
        self.derived(value, Op::SoftmaxCrossEntropy(logits, targets.to_vec()), &[logits])
    }

    /// Differentiable gradients of the scalar `root` with respect to `wrt`.
    ///
    /// The returned nodes live in this graph and can feed further
    /// differentiable expressions. Variables unreachable from `root` get a
    /// zero constant.
    pub fn grad(&mut self, root: Var, wrt: &[Var]) -> Result<Vec<Var>> {
        if !self.value(root).is_scalar() {
            let (r, c) = self.shape(root);
            return Err(Error::Contract(format!("backward needs a scalar root, got {r}x{c}")));
        }
        let stop = wrt.iter().map(|v| v.0).min().unwrap_or(root.0);
        let mut adjoint: Vec<Option<Var>> = vec![None; root.0 + 1];
        if self.nodes[root.0].requires_grad {
            adjoint[root.0] = Some(self.constant(Matrix::scalar(1.0)));
        }
        for i in (stop..=root.0).rev() {
            let Some(g) = adjoint[i] else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            let op = self.nodes[i].op.clone();
            for (parent, contribution) in self.backprop(Var(i), &op, g)? {
                if parent.0 < stop || !self.nodes[parent.0].requires_grad {
                    continue;
                }
                adjoint[parent.0] = Some(match adjoint[parent.0] {
                    Some(acc) => self.add(acc, contribution)?,
                    None => contribution,
                });
            }
        }
        wrt.iter()
            .map(|v| match adjoint.get(v.0).copied().flatten() {
                Some(g) => Ok(g),
                None => {
                    let (r, c) = self.shape(*v);
                    Ok(self.constant(Matrix::zeros(r, c)))
                }
            })
            .collect()
    }

    /// Gradient values of the scalar `root` with respect to `wrt`.
    pub fn backward(&mut self, root: Var, wrt: &[Var]) -> Result<Gradients> {
        let grads = self.grad(root, wrt)?;
        let map = wrt.iter().zip(grads).map(|(v, g)| (*v, self.value(g).clone())).collect();
        Ok(Gradients { map })
    }

    /// Parent contributions of one node given its upstream gradient `g`.
    fn backprop(&mut self, out: Var, op: &Op, g: Var) -> Result<Vec<(Var, Var)>> {
        let rg = |graph: &Graph, v: Var| graph.nodes[v.0].requires_grad;
        Ok(match *op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => {
                let mut out = Vec::with_capacity(2);
                if rg(self, a) {
                    let bt = self.transpose(b)?;
                    out.push((a, self.matmul(g, bt)?));
                }
                if rg(self, b) {
                    let at = self.transpose(a)?;
                    out.push((b, self.matmul(at, g)?));
                }
                out
            }
            Op::Transpose(a) => vec![(a, self.transpose(g)?)],
            Op::Add(a, b) => vec![(a, g), (b, g)],
            Op::Sub(a, b) => {
                let mut out = vec![(a, g)];
                if rg(self, b) {
                    out.push((b, self.neg(g)?));
                }
                out
            }
            Op::AddBias(a, b) => {
                let mut out = vec![(a, g)];
                if rg(self, b) {
                    out.push((b, self.sum_rows(g)?));
                }
                out
            }
            Op::Mul(a, b) => {
                let mut out = Vec::with_capacity(2);
                if rg(self, a) {
                    out.push((a, self.mul(g, b)?));
                }
                if rg(self, b) {
                    out.push((b, self.mul(g, a)?));
                }
                out
            }
            Op::Scale(a, c) => vec![(a, self.scale(g, c)?)],
            Op::AddScalar(a) => vec![(a, g)],
            Op::LeakyRelu(a, slope) => {
                let mask = self.value(a).map(|v| if v > 0.0 { 1.0 } else { slope });
                let mask = self.constant(mask);
                vec![(a, self.mul(g, mask)?)]
            }
            Op::Relu(a) => {
                let mask = self.value(a).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
                let mask = self.constant(mask);
                vec![(a, self.mul(g, mask)?)]
            }
            Op::ConcatCols(a, b) => {
                let ca = self.shape(a).1;
                let cb = self.shape(b).1;
                let mut out = Vec::with_capacity(2);
                if rg(self, a) {
                    out.push((a, self.slice_cols(g, 0, ca)?));
                }
                if rg(self, b) {
                    out.push((b, self.slice_cols(g, ca, ca + cb)?));
                }
                out
            }
            Op::SliceCols(a, start) => {
                let total = self.shape(a).1;
                let width = self.shape(out).1;
                vec![(a, self.pad_cols(g, start, total - start - width)?)]
            }
            Op::PadCols(a, left) => {
                let width = self.shape(a).1;
                vec![(a, self.slice_cols(g, left, left + width)?)]
            }
            Op::Exp(a) => vec![(a, self.mul(g, out)?)],
            Op::Ln(a) => {
                let inv = self.recip_or_zero(a)?;
                vec![(a, self.mul(g, inv)?)]
            }
            Op::Sqrt(a) => {
                let inv = self.recip_or_zero(out)?;
                let half_inv = self.scale(inv, 0.5)?;
                vec![(a, self.mul(g, half_inv)?)]
            }
            Op::Square(a) => {
                let two_a = self.scale(a, 2.0)?;
                vec![(a, self.mul(g, two_a)?)]
            }
            Op::RecipOrZero(a) => {
                let y2 = self.square(out)?;
                let d = self.neg(y2)?;
                vec![(a, self.mul(g, d)?)]
            }
            Op::Sum(a) => {
                let (r, c) = self.shape(a);
                vec![(a, self.broadcast_scalar(g, r, c)?)]
            }
            Op::Mean(a) => {
                let (r, c) = self.shape(a);
                let spread = self.broadcast_scalar(g, r, c)?;
                vec![(a, self.scale(spread, 1.0 / (r * c) as f64)?)]
            }
            Op::SumRows(a) => {
                let r = self.shape(a).0;
                vec![(a, self.broadcast_rows(g, r)?)]
            }
            Op::SumCols(a) => {
                let c = self.shape(a).1;
                vec![(a, self.broadcast_cols(g, c)?)]
            }
            Op::BroadcastRows(a) => vec![(a, self.sum_rows(g)?)],
            Op::BroadcastCols(a) => vec![(a, self.sum_cols(g)?)],
            Op::BroadcastScalar(a) => vec![(a, self.sum(g)?)],
            Op::SoftmaxRows(a) => {
                // y ⊙ (g − rowsum(g ⊙ y))
                let c = self.shape(a).1;
                let gy = self.mul(g, out)?;
                let dot = self.sum_cols(gy)?;
                let dot = self.broadcast_cols(dot, c)?;
                let centered = self.sub(g, dot)?;
                vec![(a, self.mul(out, centered)?)]
            }
            Op::SoftmaxCrossEntropy(logits, ref targets) => {
                let (r, c) = self.shape(logits);
                let mut onehot = Matrix::zeros(r, c);
                for (i, &t) in targets.iter().enumerate() {
                    onehot.set(i, t, 1.0);
                }
                let onehot = self.constant(onehot);
                let p = self.softmax_rows(logits)?;
                let diff = self.sub(p, onehot)?;
                let diff = self.scale(diff, 1.0 / r as f64)?;
                let spread = self.broadcast_scalar(g, r, c)?;
                vec![(logits, self.mul(diff, spread)?)]
            }
        })
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul(..) => "matmul",
        Op::Transpose(..) => "transpose",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::AddBias(..) => "add_bias",
        Op::Mul(..) => "mul",
        Op::Scale(..) => "scale",
        Op::AddScalar(..) => "add_scalar",
        Op::LeakyRelu(..) => "leaky_relu",
        Op::Relu(..) => "relu",
        Op::ConcatCols(..) => "concat_cols",
        Op::SliceCols(..) => "slice_cols",
        Op::PadCols(..) => "pad_cols",
        Op::Exp(..) => "exp",
        Op::Ln(..) => "ln",
        Op::Sqrt(..) => "sqrt",
        Op::Square(..) => "square",
        Op::RecipOrZero(..) => "recip_or_zero",
        Op::Sum(..) => "sum",
        Op::Mean(..) => "mean",
        Op::SumRows(..) => "sum_rows",
        Op::SumCols(..) => "sum_cols",
        Op::BroadcastRows(..) => "broadcast_rows",
        Op::BroadcastCols(..) => "broadcast_cols",
        Op::BroadcastScalar(..) => "broadcast_scalar",
        Op::SoftmaxRows(..) => "softmax_rows",
        Op::SoftmaxCrossEntropy(..) => "softmax_cross_entropy",
    }
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Numerically stable row-wise softmax of a plain matrix.
pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..m.rows() {
        let row = out.row_mut(r);
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
    out
}
