//! Define-by-run reverse-mode autodiff over [`Tensor2`] values.
//!
//! Every op evaluates eagerly and records its parents. Gradients are built
//! *as new graph nodes* from the same primitive ops, so a gradient can itself
//! be differentiated; this is what the gradient penalty relies on.
//!
//! Piecewise-linear activations are expressed with [`Graph::mask`], whose
//! coefficient pattern is read from a node but treated as locally constant.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::{NnError, Tensor2};
use crate::math;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul { a: NodeId, b: NodeId, ta: bool, tb: bool },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddBias { x: NodeId, bias: NodeId },
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Mask { x: NodeId, pattern: NodeId, slope: f64 },
    BroadcastRows(NodeId),
    SumRows(NodeId),
    BroadcastCols(NodeId),
    RowSum(NodeId),
    BroadcastAll(NodeId),
    SumAll(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Sqrt(NodeId),
    Recip(NodeId),
    Tanh(NodeId),
    Slice { x: NodeId, start: usize },
    Pad { x: NodeId, start: usize },
    Concat(Vec<NodeId>),
    Gather { x: NodeId, idx: Arc<[usize]> },
    Scatter { x: NodeId, idx: Arc<[usize]> },
    SpanSum { x: NodeId, spans: Arc<[(usize, usize)]> },
}

struct Node {
    value: Tensor2,
    op: Op,
    requires_grad: bool,
}

/// A tape of evaluated nodes.
#[derive(Default)]
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

    #[inline]
    pub fn value(&self, id: NodeId) -> &Tensor2 {
        &self.nodes[id.0].value
    }

    #[inline]
    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].value.shape()
    }

    #[inline]
    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, value: Tensor2, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|&i| self.nodes[i.0].requires_grad)
    }

    /// A leaf whose gradient may be requested.
    pub fn variable(&mut self, value: Tensor2) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf treated as a constant.
    pub fn constant(&mut self, value: Tensor2) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn leaf(&mut self, value: Tensor2, requires_grad: bool) -> NodeId {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn matmul_t(&mut self, a: NodeId, b: NodeId, ta: bool, tb: bool) -> Result<NodeId, NnError> {
        let v = Tensor2::matmul(self.value(a), self.value(b), ta, tb)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::MatMul { a, b, ta, tb }, rg))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        self.matmul_t(a, b, false, false)
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<(), NnError> {
        if self.shape(a) != self.shape(b) {
            return Err(NnError::shape(
                op,
                alloc::format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        self.same_shape("add", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        self.same_shape("sub", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        self.same_shape("mul", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::Mul(a, b), rg))
    }

    /// `x + bias` with a `1 x m` bias broadcast over rows.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId, NnError> {
        let (_, m) = self.shape(x);
        if self.shape(bias) != (1, m) {
            return Err(NnError::shape(
                "add_bias",
                alloc::format!("bias {:?} for width {}", self.shape(bias), m),
            ));
        }
        let mut v = self.value(x).clone();
        let b = self.value(bias).data().to_vec();
        for r in 0..v.rows() {
            for (o, bb) in v.row_mut(r).iter_mut().zip(&b) {
                *o += bb;
            }
        }
        let rg = self.rg(&[x, bias]);
        Ok(self.push(v, Op::AddBias { x, bias }, rg))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let v = self.value(x).map(|a| a * c);
        let rg = self.rg(&[x]);
        self.push(v, Op::Scale(x, c), rg)
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> NodeId {
        let v = self.value(x).map(|a| a + c);
        let rg = self.rg(&[x]);
        self.push(v, Op::AddScalar(x), rg)
    }

    /// `x * (pattern > 0 ? 1 : slope)`, elementwise. The pattern is not
    /// differentiated (its derivative is zero almost everywhere).
    pub fn mask(&mut self, x: NodeId, pattern: NodeId, slope: f64) -> Result<NodeId, NnError> {
        self.same_shape("mask", x, pattern)?;
        let v = self
            .value(x)
            .zip_map(self.value(pattern), |a, p| if p > 0.0 { a } else { a * slope });
        let rg = self.rg(&[x]);
        Ok(self.push(v, Op::Mask { x, pattern, slope }, rg))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.mask(x, x, 0.0).expect("same node")
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> NodeId {
        self.mask(x, x, slope).expect("same node")
    }

    /// `1 x m` to `rows x m`.
    pub fn broadcast_rows(&mut self, x: NodeId, rows: usize) -> Result<NodeId, NnError> {
        let (r, m) = self.shape(x);
        if r != 1 {
            return Err(NnError::shape("broadcast_rows", "expects a single row".into()));
        }
        let src = self.value(x).data().to_vec();
        let mut data = Vec::with_capacity(rows * m);
        for _ in 0..rows {
            data.extend_from_slice(&src);
        }
        let v = Tensor2::from_vec(rows, m, data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(v, Op::BroadcastRows(x), rg))
    }

    /// Column sums, `n x m` to `1 x m`.
    pub fn sum_rows(&mut self, x: NodeId) -> NodeId {
        let t = self.value(x);
        let mut out = Tensor2::zeros(1, t.cols());
        for r in 0..t.rows() {
            for (o, v) in out.data_mut().iter_mut().zip(t.row(r)) {
                *o += v;
            }
        }
        let rg = self.rg(&[x]);
        self.push(out, Op::SumRows(x), rg)
    }

    /// `n x 1` to `n x cols`.
    pub fn broadcast_cols(&mut self, x: NodeId, cols: usize) -> Result<NodeId, NnError> {
        let (n, c) = self.shape(x);
        if c != 1 {
            return Err(NnError::shape("broadcast_cols", "expects a single column".into()));
        }
        let t = self.value(x);
        let mut out = Tensor2::zeros(n, cols);
        for r in 0..n {
            let v = t.get(r, 0);
            out.row_mut(r).iter_mut().for_each(|o| *o = v);
        }
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::BroadcastCols(x), rg))
    }

    /// Row sums, `n x m` to `n x 1`.
    pub fn row_sum(&mut self, x: NodeId) -> NodeId {
        let t = self.value(x);
        let mut out = Tensor2::zeros(t.rows(), 1);
        for r in 0..t.rows() {
            out.set(r, 0, t.row(r).iter().sum());
        }
        let rg = self.rg(&[x]);
        self.push(out, Op::RowSum(x), rg)
    }

    /// `1 x 1` to `rows x cols`.
    pub fn broadcast_all(&mut self, x: NodeId, rows: usize, cols: usize) -> Result<NodeId, NnError> {
        if self.shape(x) != (1, 1) {
            return Err(NnError::shape("broadcast_all", "expects a scalar".into()));
        }
        let v = Tensor2::filled(rows, cols, self.value(x).get(0, 0));
        let rg = self.rg(&[x]);
        Ok(self.push(v, Op::BroadcastAll(x), rg))
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let v = Tensor2::filled(1, 1, self.value(x).sum());
        let rg = self.rg(&[x]);
        self.push(v, Op::SumAll(x), rg)
    }

    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let (r, c) = self.shape(x);
        let s = self.sum_all(x);
        self.scale(s, 1.0 / (r * c).max(1) as f64)
    }

    fn unary(&mut self, x: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let v = self.value(x).map(f);
        let rg = self.rg(&[x]);
        self.push(v, op, rg)
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        self.unary(x, math::exp, Op::Exp(x))
    }

    pub fn ln(&mut self, x: NodeId) -> NodeId {
        self.unary(x, math::ln, Op::Ln(x))
    }

    pub fn sqrt(&mut self, x: NodeId) -> NodeId {
        self.unary(x, math::sqrt, Op::Sqrt(x))
    }

    pub fn recip(&mut self, x: NodeId) -> NodeId {
        self.unary(x, |v| 1.0 / v, Op::Recip(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.unary(x, math::tanh, Op::Tanh(x))
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        self.mul(x, x).expect("same node")
    }

    /// Columns `start..start + len`.
    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId, NnError> {
        let (_, m) = self.shape(x);
        if start + len > m {
            return Err(NnError::shape(
                "slice_cols",
                alloc::format!("{}..{} of width {}", start, start + len, m),
            ));
        }
        let v = self.value(x).slice_cols(start, len);
        let rg = self.rg(&[x]);
        Ok(self.push(v, Op::Slice { x, start }, rg))
    }

    /// Embeds `x` into zero columns of width `total` at `start`.
    pub fn pad_cols(&mut self, x: NodeId, start: usize, total: usize) -> Result<NodeId, NnError> {
        let (n, m) = self.shape(x);
        if start + m > total {
            return Err(NnError::shape("pad_cols", "does not fit".into()));
        }
        let t = self.value(x);
        let mut out = Tensor2::zeros(n, total);
        for r in 0..n {
            out.row_mut(r)[start..start + m].copy_from_slice(t.row(r));
        }
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::Pad { x, start }, rg))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, NnError> {
        if parts.is_empty() {
            return Err(NnError::shape("concat_cols", "no parts".into()));
        }
        let v = {
            let refs: Vec<&Tensor2> = parts.iter().map(|&p| self.value(p)).collect();
            Tensor2::hcat(&refs)?
        };
        let rg = self.rg(parts);
        Ok(self.push(v, Op::Concat(parts.to_vec()), rg))
    }

    pub fn gather_rows(&mut self, x: NodeId, idx: Arc<[usize]>) -> Result<NodeId, NnError> {
        let n = self.shape(x).0;
        if idx.iter().any(|&i| i >= n) {
            return Err(NnError::shape("gather_rows", "row index out of range".into()));
        }
        let v = self.value(x).gather_rows(&idx);
        let rg = self.rg(&[x]);
        Ok(self.push(v, Op::Gather { x, idx }, rg))
    }

    /// Adjoint of [`Graph::gather_rows`]: adds row `k` of `x` into row
    /// `idx[k]` of an `n`-row zero matrix.
    pub fn scatter_rows(&mut self, x: NodeId, idx: Arc<[usize]>, n: usize) -> Result<NodeId, NnError> {
        let (k, m) = self.shape(x);
        if idx.len() != k || idx.iter().any(|&i| i >= n) {
            return Err(NnError::shape("scatter_rows", "bad index list".into()));
        }
        let t = self.value(x);
        let mut out = Tensor2::zeros(n, m);
        for (src, &dst) in idx.iter().enumerate() {
            for (o, v) in out.row_mut(dst).iter_mut().zip(t.row(src)) {
                *o += v;
            }
        }
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::Scatter { x, idx }, rg))
    }

    /// Sums each column span within a row and writes the sum back to every
    /// column of that span. Spans are `(start, width)` and must not overlap.
    pub fn span_sum(&mut self, x: NodeId, spans: Arc<[(usize, usize)]>) -> Result<NodeId, NnError> {
        let (n, m) = self.shape(x);
        if spans.iter().any(|&(s, w)| s + w > m) {
            return Err(NnError::shape("span_sum", "span out of range".into()));
        }
        let t = self.value(x);
        let mut out = Tensor2::zeros(n, m);
        for r in 0..n {
            let src = t.row(r);
            let dst = out.row_mut(r);
            for &(s, w) in spans.iter() {
                let total: f64 = src[s..s + w].iter().sum();
                dst[s..s + w].iter_mut().for_each(|o| *o = total);
            }
        }
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::SpanSum { x, spans }, rg))
    }

    /// Builds gradient nodes of the seeded outputs with respect to `wrt`.
    ///
    /// Each seed pairs an output node with a node holding `dL/d output`.
    /// Propagation only visits nodes at or above the smallest id in `wrt`,
    /// which is enough because descendants always have larger ids.
    pub fn grad_nodes(
        &mut self,
        seeds: &[(NodeId, NodeId)],
        wrt: &[NodeId],
    ) -> Result<Vec<Option<NodeId>>, NnError> {
        let Some(top) = seeds.iter().map(|s| s.0 .0).max() else {
            return Ok(vec![None; wrt.len()]);
        };
        let lower = wrt.iter().map(|w| w.0).min().unwrap_or(0);
        let mut grads: Vec<Option<NodeId>> = vec![None; top + 1];
        for &(out, seed) in seeds {
            if self.shape(out) != self.shape(seed) {
                return Err(NnError::shape("backward", "seed shape differs from output".into()));
            }
            self.accumulate(&mut grads, out, seed)?;
        }
        for id in (lower..=top).rev() {
            let Some(g) = grads[id] else { continue };
            if !self.nodes[id].requires_grad {
                continue;
            }
            let op = self.nodes[id].op.clone();
            self.propagate(&mut grads, NodeId(id), op, g, lower)?;
        }
        Ok(wrt
            .iter()
            .map(|w| grads.get(w.0).copied().flatten())
            .collect())
    }

    /// Gradient values of the seeded outputs with respect to `wrt`.
    /// Missing entries mean the output does not depend on that node.
    pub fn backward(
        &mut self,
        seeds: &[(NodeId, Tensor2)],
        wrt: &[NodeId],
    ) -> Result<Vec<Option<Tensor2>>, NnError> {
        let seed_nodes: Vec<(NodeId, NodeId)> = seeds
            .iter()
            .map(|(o, s)| (*o, self.constant(s.clone())))
            .collect();
        let nodes = self.grad_nodes(&seed_nodes, wrt)?;
        Ok(nodes
            .into_iter()
            .map(|n| n.map(|id| self.value(id).clone()))
            .collect())
    }

    /// Gradient values of a scalar output.
    pub fn backward_scalar(&mut self, out: NodeId, wrt: &[NodeId]) -> Result<Vec<Option<Tensor2>>, NnError> {
        let (r, c) = self.shape(out);
        self.backward(&[(out, Tensor2::filled(r, c, 1.0))], wrt)
    }

    fn accumulate(&mut self, grads: &mut [Option<NodeId>], at: NodeId, g: NodeId) -> Result<(), NnError> {
        if at.0 >= grads.len() {
            return Ok(());
        }
        grads[at.0] = Some(match grads[at.0] {
            Some(prev) => self.add(prev, g)?,
            None => g,
        });
        Ok(())
    }

    fn propagate(
        &mut self,
        grads: &mut [Option<NodeId>],
        this: NodeId,
        op: Op,
        g: NodeId,
        lower: usize,
    ) -> Result<(), NnError> {
        let wants = |s: &Self, p: NodeId| p.0 >= lower && s.nodes[p.0].requires_grad;
        match op {
            Op::Leaf => {}
            Op::MatMul { a, b, ta, tb } => {
                if wants(self, a) {
                    let ga = if ta {
                        self.matmul_t(b, g, tb, true)?
                    } else {
                        self.matmul_t(g, b, false, !tb)?
                    };
                    self.accumulate(grads, a, ga)?;
                }
                if wants(self, b) {
                    let gb = if tb {
                        self.matmul_t(g, a, true, ta)?
                    } else {
                        self.matmul_t(a, g, !ta, false)?
                    };
                    self.accumulate(grads, b, gb)?;
                }
            }
            Op::Add(a, b) => {
                if wants(self, a) {
                    self.accumulate(grads, a, g)?;
                }
                if wants(self, b) {
                    self.accumulate(grads, b, g)?;
                }
            }
            Op::Sub(a, b) => {
                if wants(self, a) {
                    self.accumulate(grads, a, g)?;
                }
                if wants(self, b) {
                    let nb = self.scale(g, -1.0);
                    self.accumulate(grads, b, nb)?;
                }
            }
            Op::Mul(a, b) => {
                if wants(self, a) {
                    let ga = self.mul(g, b)?;
                    self.accumulate(grads, a, ga)?;
                }
                if wants(self, b) {
                    let gb = self.mul(g, a)?;
                    self.accumulate(grads, b, gb)?;
                }
            }
            Op::AddBias { x, bias } => {
                if wants(self, x) {
                    self.accumulate(grads, x, g)?;
                }
                if wants(self, bias) {
                    let gb = self.sum_rows(g);
                    self.accumulate(grads, bias, gb)?;
                }
            }
            Op::Scale(x, c) => {
                if wants(self, x) {
                    let gx = self.scale(g, c);
                    self.accumulate(grads, x, gx)?;
                }
            }
            Op::AddScalar(x) => {
                if wants(self, x) {
                    self.accumulate(grads, x, g)?;
                }
            }
            Op::Mask { x, pattern, slope } => {
                if wants(self, x) {
                    let gx = self.mask(g, pattern, slope)?;
                    self.accumulate(grads, x, gx)?;
                }
            }
            Op::BroadcastRows(x) => {
                if wants(self, x) {
                    let gx = self.sum_rows(g);
                    self.accumulate(grads, x, gx)?;
                }
            }
            Op::SumRows(x) => {
                if wants(self, x) {
                    let rows = self.shape(x).0;
                    let gx = self.broadcast_rows(g, rows)?;
                    self.accumulate(grads, x, gx)?;
                }
            }
            Op::BroadcastCols(x) => {
                if wants(self, x) {
                    let gx = self.row_sum(g);
                    self.accumulate(grads, x, gx)?;
                }
            }
            Op::RowSum(x) => {
                if wants(self, x) {
                    let cols = self.shape(x).1;
                    let gx = self.broadcast_cols(g, cols)?;
                    self.accumulate(grads, x, gx)?;
                }
            }
            Op::BroadcastAll(x) => {
                if wants(self, x) {
                    let gx = self.sum_all(g);
                    self.accumulate(grads, x, gx)?;
                }
            }
            Op::SumAll(x) => {
                if wants(self, x) {
                    let (r, c) = self.shape(x);
                    let gx = self.broadcast_all(g, r, c)?;
                    self.accumulate(grads, x, gx)?;
                }
            }
            Op::Exp(x) => {
                if wants(self, x) {
                    let gx = self.mul(g, this)?;
                    self.accumulate(grads, x, gx)?;
                }
            }
            Op::Ln(x) => {
                if wants(self, x) {
                    let inv = self.recip(x);
                    let gx = self.mul(g, inv)?;
                    self.accumulate(grads, x, gx)?;
                }
            }
            Op::Sqrt(x) => {
                if wants(self, x) {
                    let inv = self.recip(this);
                    let half = self.scale(inv, 0.5);
                    let gx = self.mul(g, half)?;
                    self.accumulate(grads, x, gx)?;
                }
            }
            Op::Recip(x) => {
                if wants(self, x) {
                    let sq = self.square(this);
                    let neg = self.scale(sq, -1.0);
                    let gx = self.mul(g, neg)?;
                    self.accumulate(grads, x, gx)?;
                }
            }
            Op::Tanh(x) => {
                if wants(self, x) {
                    let sq = self.square(this);
                    let neg = self.scale(sq, -1.0);
                    let d = self.add_scalar(neg, 1.0);
                    let gx = self.mul(g, d)?;
                    self.accumulate(grads, x, gx)?;
                }
            }
            Op::Slice { x, start } => {
                if wants(self, x) {
                    let total = self.shape(x).1;
                    let gx = self.pad_cols(g, start, total)?;
                    self.accumulate(grads, x, gx)?;
                }
            }
            Op::Pad { x, start } => {
                if wants(self, x) {
                    let len = self.shape(x).1;
                    let gx = self.slice_cols(g, start, len)?;
                    self.accumulate(grads, x, gx)?;
                }
            }
            Op::Concat(parts) => {
                let mut start = 0;
                for p in parts {
                    let w = self.shape(p).1;
                    if wants(self, p) {
                        let gp = self.slice_cols(g, start, w)?;
                        self.accumulate(grads, p, gp)?;
                    }
                    start += w;
                }
            }
            Op::Gather { x, idx } => {
                if wants(self, x) {
                    let n = self.shape(x).0;
                    let gx = self.scatter_rows(g, idx, n)?;
                    self.accumulate(grads, x, gx)?;
                }
            }
            Op::Scatter { x, idx } => {
                if wants(self, x) {
                    let gx = self.gather_rows(g, idx)?;
                    self.accumulate(grads, x, gx)?;
                }
            }
            Op::SpanSum { x, spans } => {
                if wants(self, x) {
                    let gx = self.span_sum(g, spans)?;
                    self.accumulate(grads, x, gx)?;
                }
            }
        }
        Ok(())
    }
}
