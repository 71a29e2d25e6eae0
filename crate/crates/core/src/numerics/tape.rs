//! Define-by-run reverse-mode autodiff over dense matrices.
//!
//! A [`Tape`] is built fresh for every forward pass. Operations append nodes
//! in creation order, which is already a topological order, so the backward
//! sweep is a single reverse scan from the loss node.

use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::matrix::{gemm_nn, gemm_nt, gemm_tn};
use crate::numerics::{Matrix, SparseRowMatrix};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Tensor(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Elu,
    Identity,
}

/// `tanh` through a single `exp`, within 1e-13 relative error of libm and
/// several times faster. Tiny inputs use libm to avoid cancellation.
#[inline]
pub fn tanh(x: f64) -> f64 {
    let a = x.abs();
    if a < 1e-3 || a.is_nan() {
        return x.tanh();
    }
    let t = (-2.0 * a).exp();
    ((1.0 - t) / (1.0 + t)).copysign(x)
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => tanh(x),
            Activation::Relu => x.max(0.0),
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Elu => "elu",
            Activation::Identity => "identity",
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "elu" => Ok(Activation::Elu),
            "identity" | "id" | "linear" => Ok(Activation::Identity),
            other => Err(Error::Config(format!("unknown activation '{other}'"))),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

enum Op {
    Leaf,
    MatMul(Tensor, Tensor),
    SpMM(Arc<SparseRowMatrix>, Tensor),
    Act(Activation, Tensor),
    Mul(Tensor, Tensor),
    Add(Tensor, Tensor),
    Scale(Tensor, f64),
    SliceRows { src: Tensor, start: usize },
    Dropout { src: Tensor, multiplier: Vec<f64> },
    Sum(Tensor),
    GatedScatter { edges: Arc<GatedEdges>, h: Tensor, send: Tensor, recv: Tensor, gates: Matrix },
    CrossEntropy { logits: Tensor, labels: Vec<usize>, mask: Vec<usize>, probs: Matrix },
}

/// Weighted directed edges `(sender, receiver, weight)` for
/// [`Tape::gated_scatter`].
#[derive(Debug, Clone)]
pub struct GatedEdges {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl GatedEdges {
    pub fn new(n: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(s, d, _)) = edges.iter().find(|&&(s, d, _)| s >= n || d >= n) {
            return Err(Error::Contract(format!("edge ({s}, {d}) outside {n} nodes")));
        }
        Ok(Self { n, edges })
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

struct Node {
    value: Arc<Matrix>,
    grad: Option<Matrix>,
    requires_grad: bool,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    backward_done: bool,
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

    fn push(&mut self, value: Matrix, requires_grad: bool, op: Op) -> Tensor {
        self.push_shared(Arc::new(value), requires_grad, op)
    }

    fn push_shared(&mut self, value: Arc<Matrix>, requires_grad: bool, op: Op) -> Tensor {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Tensor(self.nodes.len() - 1)
    }

    fn needs(&self, t: Tensor) -> bool {
        self.nodes[t.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Tensor {
        self.push(value, true, Op::Leaf)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Tensor {
        self.push(value, false, Op::Leaf)
    }

    pub fn constant_shared(&mut self, value: Arc<Matrix>) -> Tensor {
        self.push_shared(value, false, Op::Leaf)
    }

    pub fn value(&self, t: Tensor) -> &Matrix {
        &self.nodes[t.0].value
    }

    pub fn shape(&self, t: Tensor) -> (usize, usize) {
        self.nodes[t.0].value.shape()
    }

    pub fn grad(&self, t: Tensor) -> Option<&Matrix> {
        self.nodes[t.0].grad.as_ref()
    }

    pub fn requires_grad(&self, t: Tensor) -> bool {
        self.needs(t)
    }

    pub fn matmul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.rows() {
            return Err(Error::dim("matmul", va.shape(), vb.shape()));
        }
        let mut out = Matrix::zeros(va.rows(), vb.cols());
        gemm_nn(va, vb, &mut out);
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, rg, Op::MatMul(a, b)))
    }

    /// `S · H` for a constant sparse `S`.
    pub fn spmm(&mut self, s: &Arc<SparseRowMatrix>, h: Tensor) -> Result<Tensor> {
        let out = s.mul_dense(self.value(h))?;
        let rg = self.needs(h);
        Ok(self.push(out, rg, Op::SpMM(Arc::clone(s), h)))
    }

    pub fn activation(&mut self, kind: Activation, x: Tensor) -> Tensor {
        if kind == Activation::Identity {
            return x;
        }
        let out = self.value(x).map(|v| kind.apply(v));
        let rg = self.needs(x);
        self.push(out, rg, Op::Act(kind, x))
    }

    pub fn tanh(&mut self, x: Tensor) -> Tensor {
        self.activation(Activation::Tanh, x)
    }

    pub fn mul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let out = self.value(a).hadamard(self.value(b))?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, rg, Op::Mul(a, b)))
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let out = self.value(a).add(self.value(b))?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, rg, Op::Add(a, b)))
    }

    pub fn scale(&mut self, x: Tensor, s: f64) -> Tensor {
        let out = self.value(x).scale(s);
        let rg = self.needs(x);
        self.push(out, rg, Op::Scale(x, s))
    }

    /// Rows `start..start + len` of `x`.
    pub fn slice_rows(&mut self, x: Tensor, start: usize, len: usize) -> Result<Tensor> {
        let v = self.value(x);
        if start + len > v.rows() {
            return Err(Error::dim("slice_rows", v.shape(), (start + len, v.cols())));
        }
        let out = Matrix::from_vec(len, v.cols(), v.as_slice()[start * v.cols()..(start + len) * v.cols()].to_vec())?;
        let rg = self.needs(x);
        Ok(self.push(out, rg, Op::SliceRows { src: x, start }))
    }

    /// Inverted dropout. Identity when `!training` or `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Tensor, p: f64, training: bool, rng: &mut R) -> Result<Tensor> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout probability {p} outside [0, 1)")));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let v = self.value(x);
        let multiplier: Vec<f64> = (0..v.len())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let data = v.as_slice().iter().zip(&multiplier).map(|(a, m)| a * m).collect();
        let out = Matrix::from_vec(v.rows(), v.cols(), data)?;
        let rg = self.needs(x);
        Ok(self.push(out, rg, Op::Dropout { src: x, multiplier }))
    }

    pub fn sum(&mut self, x: Tensor) -> Tensor {
        let s = self.value(x).sum();
        let rg = self.needs(x);
        self.push(Matrix::filled(1, 1, s), rg, Op::Sum(x))
    }

    /// `out_u = Σ_{(v, u, w)} w · tanh(send_v + recv_u) ⊙ h_v`, with the gate
    /// matrix kept for the backward pass instead of per-edge intermediates.
    pub fn gated_scatter(&mut self, edges: &Arc<GatedEdges>, h: Tensor, send: Tensor, recv: Tensor) -> Result<Tensor> {
        let shape = self.shape(h);
        for (name, t) in [("send", send), ("recv", recv)] {
            if self.shape(t) != shape {
                return Err(Error::dim(name, self.shape(t), shape));
            }
        }
        if shape.0 != edges.n {
            return Err(Error::dim("gated_scatter", shape, (edges.n, shape.1)));
        }
        let d = shape.1;
        let (hv, sv, rv) = (self.value(h), self.value(send), self.value(recv));
        let mut gates = Matrix::zeros(edges.len(), d);
        let mut out = Matrix::zeros(edges.n, d);
        for (e, &(s, r, w)) in edges.edges.iter().enumerate() {
            let z = gates.row_mut(e);
            for ((zc, a), b) in z.iter_mut().zip(sv.row(s)).zip(rv.row(r)) {
                *zc = tanh(a + b);
            }
            let o = out.row_mut(r);
            for ((oc, zc), x) in o.iter_mut().zip(z.iter()).zip(hv.row(s)) {
                *oc += w * zc * x;
            }
        }
        let rg = self.needs(h) || self.needs(send) || self.needs(recv);
        Ok(self.push(out, rg, Op::GatedScatter { edges: Arc::clone(edges), h, send, recv, gates }))
    }

    /// Mean negative log-softmax likelihood over the rows listed in `mask`.
    pub fn masked_cross_entropy(&mut self, logits: Tensor, labels: &[usize], mask: &[usize]) -> Result<Tensor> {
        let v = self.value(logits);
        if mask.is_empty() {
            return Err(Error::Evaluation("cross-entropy over an empty mask".into()));
        }
        if labels.len() != v.rows() {
            return Err(Error::dim("masked_cross_entropy", v.shape(), (labels.len(), 1)));
        }
        let classes = v.cols();
        let mut probs = Matrix::zeros(mask.len(), classes);
        let mut total = 0.0;
        for (k, &node) in mask.iter().enumerate() {
            let label = labels[node];
            if label >= classes {
                return Err(Error::Contract(format!("label {label} >= class count {classes}")));
            }
            let row = v.row(node);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = row.iter().map(|x| (x - max).exp()).sum();
            let log_z = max + denom.ln();
            total += log_z - row[label];
            for (p, x) in probs.row_mut(k).iter_mut().zip(row) {
                *p = (x - log_z).exp();
            }
        }
        let loss = total / mask.len() as f64;
        let rg = self.needs(logits);
        Ok(self.push(
            Matrix::filled(1, 1, loss),
            rg,
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                mask: mask.to_vec(),
                probs,
            },
        ))
    }

    /// Clears accumulated gradients so [`Tape::backward`] may run again.
    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.backward_done = false;
    }

    /// Accumulates `d loss / d x` into every gradient-requiring ancestor.
    pub fn backward(&mut self, loss: Tensor) -> Result<()> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got {:?}",
                self.value(loss).shape()
            )));
        }
        if self.backward_done {
            return Err(Error::Contract("backward called twice without zero_grad".into()));
        }
        self.backward_done = true;
        if !self.needs(loss) {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(Matrix::filled(1, 1, 1.0));

        for id in (0..=loss.0).rev() {
            let Some(g) = self.nodes[id].grad.take() else {
                continue;
            };
            self.propagate(id, &g);
            self.nodes[id].grad = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, t: Tensor, contribution: Matrix) {
        if !self.needs(t) {
            return;
        }
        let node = &mut self.nodes[t.0];
        match &mut node.grad {
            Some(existing) => existing.add_assign(&contribution),
            None => node.grad = Some(contribution),
        }
    }

    /// Runs `f` on a zeroed buffer shaped like `t` and accumulates the result.
    fn accumulate_with(&mut self, t: Tensor, f: impl FnOnce(&Self, &mut Matrix)) {
        if !self.needs(t) {
            return;
        }
        let (r, c) = self.shape(t);
        let mut buf = Matrix::zeros(r, c);
        f(self, &mut buf);
        self.accumulate(t, buf);
    }

    fn propagate(&mut self, id: usize, g: &Matrix) {
        // Ops are moved out temporarily so `self` can be borrowed mutably.
        let op = std::mem::replace(&mut self.nodes[id].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                self.accumulate_with(a, |tape, buf| gemm_nt(g, tape.value(b), buf));
                self.accumulate_with(b, |tape, buf| gemm_tn(tape.value(a), g, buf));
            }
            Op::SpMM(s, h) => {
                self.accumulate_with(*h, |_, buf| s.mul_transpose_dense_into(g, buf));
            }
            Op::Act(kind, x) => {
                let (x_val, y_val) = (self.value(*x), &self.nodes[id].value);
                let data = x_val
                    .as_slice()
                    .iter()
                    .zip(y_val.as_slice())
                    .zip(g.as_slice())
                    .map(|((&xi, &yi), &gi)| gi * kind.derivative(xi, yi))
                    .collect();
                let contribution = Matrix::from_vec(g.rows(), g.cols(), data).expect("shape preserved");
                self.accumulate(*x, contribution);
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                if self.needs(a) {
                    let c = g.hadamard(self.value(b)).expect("shape preserved");
                    self.accumulate(a, c);
                }
                if self.needs(b) {
                    let c = g.hadamard(self.value(a)).expect("shape preserved");
                    self.accumulate(b, c);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(*a, g.clone());
                self.accumulate(*b, g.clone());
            }
            Op::Scale(x, s) => {
                self.accumulate(*x, g.scale(*s));
            }
            Op::SliceRows { src, start } => {
                let start = *start;
                self.accumulate_with(*src, |_, buf| {
                    let cols = g.cols();
                    buf.as_mut_slice()[start * cols..(start + g.rows()) * cols].copy_from_slice(g.as_slice());
                });
            }
            Op::Dropout { src, multiplier } => {
                let data = g.as_slice().iter().zip(multiplier).map(|(a, m)| a * m).collect();
                let contribution = Matrix::from_vec(g.rows(), g.cols(), data).expect("shape preserved");
                self.accumulate(*src, contribution);
            }
            Op::Sum(x) => {
                let (r, c) = self.shape(*x);
                self.accumulate(*x, Matrix::filled(r, c, g[(0, 0)]));
            }
            Op::GatedScatter { edges, h, send, recv, gates } => {
                let (h, send, recv) = (*h, *send, *recv);
                let (n, d) = self.shape(h);
                let mut dh = Matrix::zeros(n, d);
                let mut dpre_send = Matrix::zeros(n, d);
                let mut dpre_recv = Matrix::zeros(n, d);
                let hv = self.value(h);
                let mut dpre = vec![0.0; d];
                for (e, &(s, r, w)) in edges.edges.iter().enumerate() {
                    let (z, gr, x) = (gates.row(e), g.row(r), hv.row(s));
                    for c in 0..d {
                        dpre[c] = w * gr[c] * x[c] * (1.0 - z[c] * z[c]);
                    }
                    for ((o, zc), gc) in dh.row_mut(s).iter_mut().zip(z).zip(gr) {
                        *o += w * zc * gc;
                    }
                    for (o, p) in dpre_send.row_mut(s).iter_mut().zip(&dpre) {
                        *o += p;
                    }
                    for (o, p) in dpre_recv.row_mut(r).iter_mut().zip(&dpre) {
                        *o += p;
                    }
                }
                if self.needs(h) {
                    self.accumulate(h, dh);
                }
                if self.needs(send) {
                    self.accumulate(send, dpre_send);
                }
                if self.needs(recv) {
                    self.accumulate(recv, dpre_recv);
                }
            }
            Op::CrossEntropy { logits, labels, mask, probs } => {
                let scale = g[(0, 0)] / mask.len() as f64;
                self.accumulate_with(*logits, |_, buf| {
                    for (k, &node) in mask.iter().enumerate() {
                        let row = buf.row_mut(node);
                        for (o, p) in row.iter_mut().zip(probs.row(k)) {
                            *o += scale * p;
                        }
                        row[labels[node]] -= scale;
                    }
                });
            }
        }
        self.nodes[id].op = op;
    }
}
