//! Tensor-level tape for reverse-mode differentiation.
//!
//! Every operation evaluates eagerly and appends a node holding its value and
//! the indices of its inputs. [`Tape::backward`] walks the nodes in reverse
//! and accumulates vector-Jacobian products. Nodes only ever reference
//! earlier nodes, so the tape is a topological order by construction.

use super::tensor::{self, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `scale * x + shift`
    Affine(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    MatVec(Var, Var),
    MatVecT(Var, Var),
    Concat(Vec<Var>),
    StackRows(Vec<Var>),
    Softmax(Var),
    LogSoftmax(Var),
    Dot(Var, Var),
    Sum(Var),
    Pick(Var, usize),
    CosineRows(Var, Var),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Guard added to squared norms in cosine similarity so the score stays
/// smooth at the zero vector.
pub const COSINE_EPS: f64 = 1e-12;

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints of every node reached from the differentiated output.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `v`, or zeros shaped like `like` when `v` does not
    /// influence the output.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Inputs, parameters and constants are all leaves; whether a leaf is
    /// "trainable" is decided by which gradients the caller reads back.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = tensor::elementwise(tensor::ElemOp::Add, self.value(a), Some(self.value(b)))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = tensor::elementwise(tensor::ElemOp::Sub, self.value(a), Some(self.value(b)))?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = tensor::elementwise(tensor::ElemOp::Mul, self.value(a), Some(self.value(b)))?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    /// `scale * a + shift`, elementwise.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let v = self.value(a).map(|x| scale * x + shift);
        self.push(v, Op::Affine(a, scale))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(tensor::sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn matvec(&mut self, m: Var, v: Var) -> Result<Var> {
        let out = tensor::matvec(self.value(m), self.value(v))?;
        Ok(self.push(out, Op::MatVec(m, v)))
    }

    pub fn matvec_t(&mut self, m: Var, v: Var) -> Result<Var> {
        let out = tensor::matvec_t(self.value(m), self.value(v))?;
        Ok(self.push(out, Op::MatVecT(m, v)))
    }

    /// `m·x + b`
    pub fn linear(&mut self, m: Var, x: Var, b: Var) -> Result<Var> {
        let mx = self.matvec(m, x)?;
        self.add(mx, b)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.ndim() != 1 {
                return Err(Error::InvalidTensor(format!(
                    "concat expects vectors, got {:?}",
                    t.shape()
                )));
            }
            data.extend_from_slice(t.data());
        }
        let len = data.len();
        let out = Tensor::new(vec![len], data)?;
        Ok(self.push(out, Op::Concat(parts.to_vec())))
    }

    /// Stacks equal-length vectors into a `[rows × len]` matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let first = rows.first().ok_or(Error::Empty("stack_rows"))?;
        let width = self.value(*first).len();
        let mut data = Vec::with_capacity(rows.len() * width);
        for &r in rows {
            let t = self.value(r);
            if t.ndim() != 1 || t.len() != width {
                return Err(Error::shape("stack_rows", &[width], t.shape()));
            }
            data.extend_from_slice(t.data());
        }
        let out = Tensor::new(vec![rows.len(), width], data)?;
        Ok(self.push(out, Op::StackRows(rows.to_vec())))
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let out = tensor::softmax(self.value(a))?;
        Ok(self.push(out, Op::Softmax(a)))
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let out = tensor::log_softmax(self.value(a))?;
        Ok(self.push(out, Op::LogSoftmax(a)))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape("dot", ta.shape(), tb.shape()));
        }
        let out = Tensor::scalar(tensor::dot(ta.data(), tb.data()));
        Ok(self.push(out, Op::Dot(a, b)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    pub fn pick(&mut self, a: Var, index: usize) -> Result<Var> {
        let t = self.value(a);
        if t.ndim() != 1 || index >= t.len() {
            return Err(Error::InvalidTensor(format!(
                "pick index {index} out of range for {:?}",
                t.shape()
            )));
        }
        let out = Tensor::scalar(t.data()[index]);
        Ok(self.push(out, Op::Pick(a, index)))
    }

    /// Cosine similarity between `h: [d]` and every row of `m: [n×d]`.
    pub fn cosine_rows(&mut self, m: Var, h: Var) -> Result<Var> {
        let (tm, th) = (self.value(m), self.value(h));
        if tm.ndim() != 2 || th.ndim() != 1 || tm.cols() != th.len() {
            return Err(Error::shape("cosine_rows", tm.shape(), th.shape()));
        }
        let nh = (tensor::dot(th.data(), th.data()) + COSINE_EPS).sqrt();
        let out: Vec<f64> = (0..tm.rows())
            .map(|i| {
                let row = tm.row(i);
                let ne = (tensor::dot(row, row) + COSINE_EPS).sqrt();
                tensor::dot(row, th.data()) / (ne * nh)
            })
            .collect();
        let out = Tensor::vector(out);
        Ok(self.push(out, Op::CosineRows(m, h)))
    }

    /// Reverse sweep from `output` seeded with `seed` (same shape as the
    /// output). For a scalar output use a seed of `[1.0]`.
    pub fn backward(&self, output: Var, seed: Tensor) -> Result<Gradients> {
        if seed.shape() != self.value(output).shape() {
            return Err(Error::shape("backward seed", self.value(output).shape(), seed.shape()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        grads[output.0] = Some(seed);

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    accumulate(&self.nodes, &mut grads, *a, g.data(), 1.0);
                    accumulate(&self.nodes, &mut grads, *b, g.data(), 1.0);
                }
                Op::Sub(a, b) => {
                    accumulate(&self.nodes, &mut grads, *a, g.data(), 1.0);
                    accumulate(&self.nodes, &mut grads, *b, g.data(), -1.0);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                    for (o, (g, y)) in slot(&self.nodes, &mut grads, *a).iter_mut().zip(g.data().iter().zip(vb)) {
                        *o += g * y;
                    }
                    for (o, (g, x)) in slot(&self.nodes, &mut grads, *b).iter_mut().zip(g.data().iter().zip(va)) {
                        *o += g * x;
                    }
                }
                Op::Affine(a, scale) => accumulate(&self.nodes, &mut grads, *a, g.data(), *scale),
                Op::Sigmoid(a) => {
                    let y = node.value.data();
                    for (o, (g, y)) in slot(&self.nodes, &mut grads, *a).iter_mut().zip(g.data().iter().zip(y)) {
                        *o += g * y * (1.0 - y);
                    }
                }
                Op::Tanh(a) => {
                    let y = node.value.data();
                    for (o, (g, y)) in slot(&self.nodes, &mut grads, *a).iter_mut().zip(g.data().iter().zip(y)) {
                        *o += g * (1.0 - y * y);
                    }
                }
                Op::MatVec(m, v) => {
                    let (tm, tv) = (self.value(*m), self.value(*v));
                    let c = tm.cols();
                    let gm = slot(&self.nodes, &mut grads, *m);
                    for (row, &gi) in gm.chunks_exact_mut(c).zip(g.data()) {
                        for (o, &x) in row.iter_mut().zip(tv.data()) {
                            *o += gi * x;
                        }
                    }
                    let gv = slot(&self.nodes, &mut grads, *v);
                    for (row, &gi) in tm.data().chunks_exact(c).zip(g.data()) {
                        for (o, &w) in gv.iter_mut().zip(row) {
                            *o += gi * w;
                        }
                    }
                }
                Op::MatVecT(m, v) => {
                    let (tm, tv) = (self.value(*m), self.value(*v));
                    let c = tm.cols();
                    let gm = slot(&self.nodes, &mut grads, *m);
                    for (row, &vi) in gm.chunks_exact_mut(c).zip(tv.data()) {
                        for (o, &x) in row.iter_mut().zip(g.data()) {
                            *o += vi * x;
                        }
                    }
                    let gv = tensor::matvec(tm, &g)?;
                    accumulate(&self.nodes, &mut grads, *v, gv.data(), 1.0);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.value(*p).len();
                        accumulate(&self.nodes, &mut grads, *p, &g.data()[offset..offset + n], 1.0);
                        offset += n;
                    }
                }
                Op::StackRows(rows) => {
                    for (i, r) in rows.iter().enumerate() {
                        accumulate(&self.nodes, &mut grads, *r, g.row(i), 1.0);
                    }
                }
                Op::Softmax(a) => {
                    let y = node.value.data();
                    let gy = tensor::dot(g.data(), y);
                    for (o, (g, y)) in slot(&self.nodes, &mut grads, *a).iter_mut().zip(g.data().iter().zip(y)) {
                        *o += y * (g - gy);
                    }
                }
                Op::LogSoftmax(a) => {
                    let total: f64 = g.data().iter().sum();
                    let ly = node.value.data();
                    for (o, (g, ly)) in slot(&self.nodes, &mut grads, *a).iter_mut().zip(g.data().iter().zip(ly)) {
                        *o += g - ly.exp() * total;
                    }
                }
                Op::Dot(a, b) => {
                    let s = g.item();
                    accumulate(&self.nodes, &mut grads, *a, self.value(*b).data(), s);
                    accumulate(&self.nodes, &mut grads, *b, self.value(*a).data(), s);
                }
                Op::Sum(a) => {
                    let s = g.item();
                    for o in slot(&self.nodes, &mut grads, *a) {
                        *o += s;
                    }
                }
                Op::Pick(a, i) => slot(&self.nodes, &mut grads, *a)[*i] += g.item(),
                Op::CosineRows(m, h) => {
                    let (tm, th) = (self.value(*m), self.value(*h));
                    let hv = th.data();
                    let nh2 = tensor::dot(hv, hv) + COSINE_EPS;
                    let nh = nh2.sqrt();
                    let d = th.len();
                    let mut gh = vec![0.0; d];
                    let gm = slot(&self.nodes, &mut grads, *m);
                    for i in 0..tm.rows() {
                        let gi = g.data()[i];
                        if gi == 0.0 {
                            continue;
                        }
                        let e = tm.row(i);
                        let ne2 = tensor::dot(e, e) + COSINE_EPS;
                        let ne = ne2.sqrt();
                        let s = node.value.data()[i];
                        for j in 0..d {
                            gh[j] += gi * (e[j] / (ne * nh) - s * hv[j] / nh2);
                            gm[i * d + j] += gi * (hv[j] / (ne * nh) - s * e[j] / ne2);
                        }
                    }
                    accumulate(&self.nodes, &mut grads, *h, &gh, 1.0);
                }
            }
            // Leaves keep their adjoint so callers can read it back.
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }
}

/// Adjoint buffer of `target`, zero-initialised on first use.
fn slot<'g>(nodes: &[Node], grads: &'g mut [Option<Tensor>], target: Var) -> &'g mut [f64] {
    grads[target.0]
        .get_or_insert_with(|| Tensor::zeros(nodes[target.0].value.shape()))
        .data_mut()
}

fn accumulate(nodes: &[Node], grads: &mut [Option<Tensor>], target: Var, g: &[f64], scale: f64) {
    match &mut grads[target.0] {
        Some(acc) => {
            for (a, &x) in acc.data_mut().iter_mut().zip(g) {
                *a += scale * x;
            }
        }
        slot @ None => {
            let data: Vec<f64> = if scale == 1.0 {
                g.to_vec()
            } else {
                g.iter().map(|x| scale * x).collect()
            };
            *slot = Some(nodes[target.0].value.same_shape(data));
        }
    }
}
