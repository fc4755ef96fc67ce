//! Reverse-mode tape.
//!
//! Every op appends a node holding its forward value and whatever it needs
//! for the backward pass. `backward` walks the nodes in reverse and
//! accumulates, so a value used twice receives the sum of both paths.

use std::collections::{BTreeMap, HashMap};

use crate::float::{gemm, Float, View, ViewMut};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{axis_split, Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

pub(crate) enum Op<F> {
    Leaf,
    /// `x [.., i] @ w [i, o] (+ b [o])`
    Linear { x: Var, w: Var, b: Option<Var> },
    /// `b`'s shape is a suffix of `a`'s and is broadcast over the leading axes.
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, s: F },
    Concat { parts: Vec<Var>, axis: usize },
    Slice { x: Var, axis: usize, start: usize },
    Reshape { x: Var },
    Softmax { x: Var, axis: usize },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<F>, rstd: Vec<F> },
    Gelu { x: Var },
    Sigmoid { x: Var },
    Map { x: Var, df: fn(F) -> F },
    /// `x [B, L, Cin]`, `w [K, Cin, Cout]`, same padding.
    Conv1d { x: Var, w: Var, b: Option<Var> },
    Attention { q: Var, k: Var, v: Var, heads: usize, probs: Vec<F> },
    GatherRows { x: Var, idx: Vec<usize> },
    MeanAxis { x: Var, axis: usize },
    Sum { x: Var },
    Mean { x: Var },
    Mse { x: Var, target: Vec<F> },
    External { x: Var, grad: Vec<F> },
}

impl<F> Op<F> {
    fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf => vec![],
            Linear { x, w, b } => [Some(*x), Some(*w), *b].into_iter().flatten().collect(),
            Add { a, b } | Sub { a, b } | Mul { a, b } => vec![*a, *b],
            Concat { parts, .. } => parts.clone(),
            LayerNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Conv1d { x, w, b } => [Some(*x), Some(*w), *b].into_iter().flatten().collect(),
            Attention { q, k, v, .. } => vec![*q, *k, *v],
            Scale { x, .. }
            | Slice { x, .. }
            | Reshape { x }
            | Softmax { x, .. }
            | Gelu { x }
            | Sigmoid { x }
            | Map { x, .. }
            | GatherRows { x, .. }
            | MeanAxis { x, .. }
            | Sum { x }
            | Mean { x }
            | Mse { x, .. }
            | External { x, .. } => vec![*x],
        }
    }
}

pub(crate) struct Node<F> {
    pub value: Tensor<F>,
    pub op: Op<F>,
    pub requires_grad: bool,
}

pub struct Tape<F> {
    pub(crate) nodes: Vec<Node<F>>,
    params: HashMap<ParamId, Var>,
    inference: bool,
}

impl<F: Float> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Float> Tape<F> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), params: HashMap::new(), inference: false }
    }

    /// A tape on which no parameter requires a gradient.
    pub fn inference() -> Self {
        Tape { inference: true, ..Self::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor<F>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.leaf(value, false)
    }

    /// The parameter as a leaf; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore<F>, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let p = store.get(id);
        let v = self.leaf(p.tensor.clone(), !p.frozen && !self.inference);
        self.params.insert(id, v);
        v
    }

    pub(crate) fn push(&mut self, value: Tensor<F>, op: Op<F>) -> Var {
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// Gradients of the scalar `loss` with respect to every node that needs one.
    pub fn backward(&self, loss: Var) -> Result<Grads<F>> {
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(TensorError::shape("backward", self.shape(loss), &[]));
        }
        let mut grads: Vec<Option<Vec<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![F::one()]);
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        let params = self
            .params
            .iter()
            .filter_map(|(&id, &v)| {
                let g = grads[v.0].clone()?;
                Some((id, Tensor::new(self.shape(v), g).expect("grad shape")))
            })
            .collect();
        Ok(Grads { vars: grads, params })
    }
}

/// Result of a backward pass.
pub struct Grads<F> {
    vars: Vec<Option<Vec<F>>>,
    params: BTreeMap<ParamId, Tensor<F>>,
}

impl<F: Float> Grads<F> {
    pub fn wrt(&self, v: Var) -> Option<&[F]> {
        self.vars.get(v.0)?.as_deref()
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor<F>> {
        self.params.get(&id)
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor<F>)> {
        self.params.iter().map(|(&id, t)| (id, t))
    }

    pub fn global_norm(&self) -> F {
        self.params.values().flat_map(|t| t.data()).map(|&g| g * g).sum::<F>().sqrt()
    }

    pub fn scale(&mut self, s: F) {
        for t in self.params.values_mut() {
            t.data_mut().iter_mut().for_each(|g| *g *= s);
        }
    }
}

fn slot<'a, F: Float>(nodes: &[Node<F>], grads: &'a mut [Option<Vec<F>>], v: Var) -> Option<&'a mut Vec<F>> {
    let node = &nodes[v.0];
    if !node.requires_grad {
        return None;
    }
    Some(grads[v.0].get_or_insert_with(|| vec![F::zero(); node.value.numel()]))
}

impl<F: Float> Tape<F> {
    fn backward_node(&self, i: usize, g: &[F], grads: &mut [Option<Vec<F>>]) {
        let nodes = &self.nodes;
        let node = &nodes[i];
        let out = node.value.data();
        let val = |v: Var| nodes[v.0].value.data();
        let shape = |v: Var| nodes[v.0].value.shape();
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let (ni, no) = (shape(*w)[0], shape(*w)[1]);
                let rows = g.len() / no;
                if let Some(dx) = slot(nodes, grads, *x) {
                    gemm(View::dense(g, 0, rows, no), View::dense(val(*w), 0, ni, no).t(), ViewMut::dense(dx, 0, ni), true);
                }
                if let Some(dw) = slot(nodes, grads, *w) {
                    gemm(View::dense(val(*x), 0, rows, ni).t(), View::dense(g, 0, rows, no), ViewMut::dense(dw, 0, no), true);
                }
                if let Some(b) = b {
                    if let Some(db) = slot(nodes, grads, *b) {
                        for row in g.chunks_exact(no) {
                            db.iter_mut().zip(row).for_each(|(d, &r)| *d += r);
                        }
                    }
                }
            }
            Op::Add { a, b } => {
                if let Some(da) = slot(nodes, grads, *a) {
                    da.iter_mut().zip(g).for_each(|(d, &r)| *d += r);
                }
                if let Some(db) = slot(nodes, grads, *b) {
                    let n = db.len();
                    for chunk in g.chunks_exact(n) {
                        db.iter_mut().zip(chunk).for_each(|(d, &r)| *d += r);
                    }
                }
            }
            Op::Sub { a, b } => {
                if let Some(da) = slot(nodes, grads, *a) {
                    da.iter_mut().zip(g).for_each(|(d, &r)| *d += r);
                }
                if let Some(db) = slot(nodes, grads, *b) {
                    db.iter_mut().zip(g).for_each(|(d, &r)| *d -= r);
                }
            }
            Op::Mul { a, b } => {
                if let Some(da) = slot(nodes, grads, *a) {
                    for ((d, &r), &o) in da.iter_mut().zip(g).zip(val(*b)) {
                        *d += r * o;
                    }
                }
                if let Some(db) = slot(nodes, grads, *b) {
                    for ((d, &r), &o) in db.iter_mut().zip(g).zip(val(*a)) {
                        *d += r * o;
                    }
                }
            }
            Op::Scale { x, s } => {
                if let Some(dx) = slot(nodes, grads, *x) {
                    dx.iter_mut().zip(g).for_each(|(d, &r)| *d += r * *s);
                }
            }
            Op::Concat { parts, axis } => {
                let (outer, total, inner) = axis_split(node.value.shape(), *axis);
                let mut at = 0;
                for &p in parts {
                    let len = shape(p)[*axis];
                    if let Some(dp) = slot(nodes, grads, p) {
                        for o in 0..outer {
                            let src = &g[(o * total + at) * inner..(o * total + at + len) * inner];
                            let dst = &mut dp[o * len * inner..(o + 1) * len * inner];
                            dst.iter_mut().zip(src).for_each(|(d, &r)| *d += r);
                        }
                    }
                    at += len;
                }
            }
            Op::Slice { x, axis, start } => {
                let (outer, total, inner) = axis_split(shape(*x), *axis);
                let len = node.value.shape()[*axis];
                if let Some(dx) = slot(nodes, grads, *x) {
                    for o in 0..outer {
                        let dst = &mut dx[(o * total + start) * inner..(o * total + start + len) * inner];
                        let src = &g[o * len * inner..(o + 1) * len * inner];
                        dst.iter_mut().zip(src).for_each(|(d, &r)| *d += r);
                    }
                }
            }
            Op::Reshape { x } => {
                if let Some(dx) = slot(nodes, grads, *x) {
                    dx.iter_mut().zip(g).for_each(|(d, &r)| *d += r);
                }
            }
            Op::Softmax { x, axis } => {
                let (outer, len, inner) = axis_split(node.value.shape(), *axis);
                if let Some(dx) = slot(nodes, grads, *x) {
                    for o in 0..outer {
                        for k in 0..inner {
                            let idx = |j: usize| (o * len + j) * inner + k;
                            let dot: F = (0..len).map(|j| g[idx(j)] * out[idx(j)]).sum();
                            for j in 0..len {
                                dx[idx(j)] += out[idx(j)] * (g[idx(j)] - dot);
                            }
                        }
                    }
                }
            }
            Op::LayerNorm { x, gamma, beta, xhat, rstd } => {
                let d = shape(*gamma)[0];
                let gm = val(*gamma);
                if let Some(dg) = slot(nodes, grads, *gamma) {
                    for (gr, xr) in g.chunks_exact(d).zip(xhat.chunks_exact(d)) {
                        for ((t, &a), &b) in dg.iter_mut().zip(gr).zip(xr) {
                            *t += a * b;
                        }
                    }
                }
                if let Some(db) = slot(nodes, grads, *beta) {
                    for gr in g.chunks_exact(d) {
                        db.iter_mut().zip(gr).for_each(|(t, &a)| *t += a);
                    }
                }
                if let Some(dx) = slot(nodes, grads, *x) {
                    let inv_d = F::one() / F::lit(d as f64);
                    for (r, ((dxr, gr), xr)) in dx.chunks_exact_mut(d).zip(g.chunks_exact(d)).zip(xhat.chunks_exact(d)).enumerate() {
                        let mut m1 = F::zero();
                        let mut m2 = F::zero();
                        for j in 0..d {
                            let dh = gr[j] * gm[j];
                            m1 += dh;
                            m2 += dh * xr[j];
                        }
                        m1 *= inv_d;
                        m2 *= inv_d;
                        for j in 0..d {
                            dxr[j] += rstd[r] * (gr[j] * gm[j] - m1 - xr[j] * m2);
                        }
                    }
                }
            }
            Op::Gelu { x } => {
                if let Some(dx) = slot(nodes, grads, *x) {
                    for ((d, &r), &xv) in dx.iter_mut().zip(g).zip(val(*x)) {
                        *d += r * gelu_grad(xv);
                    }
                }
            }
            Op::Sigmoid { x } => {
                if let Some(dx) = slot(nodes, grads, *x) {
                    for ((d, &r), &y) in dx.iter_mut().zip(g).zip(out) {
                        *d += r * y * (F::one() - y);
                    }
                }
            }
            Op::Map { x, df } => {
                if let Some(dx) = slot(nodes, grads, *x) {
                    for ((d, &r), &xv) in dx.iter_mut().zip(g).zip(val(*x)) {
                        *d += r * df(xv);
                    }
                }
            }
            Op::Conv1d { x, w, b } => {
                let (bsz, l, cin) = (shape(*x)[0], shape(*x)[1], shape(*x)[2]);
                let (kk, cout) = (shape(*w)[0], shape(*w)[2]);
                let pad = kk / 2;
                for (tap, lo, hi, src) in conv_taps(l, kk, pad) {
                    let rows = hi - lo;
                    for bi in 0..bsz {
                        let g_off = (bi * l + lo) * cout;
                        let x_off = (bi * l + src) * cin;
                        if let Some(dx) = slot(nodes, grads, *x) {
                            gemm(
                                View::dense(g, g_off, rows, cout),
                                View::dense(val(*w), tap * cin * cout, cin, cout).t(),
                                ViewMut::dense(dx, x_off, cin),
                                true,
                            );
                        }
                        if let Some(dw) = slot(nodes, grads, *w) {
                            gemm(
                                View::dense(val(*x), x_off, rows, cin).t(),
                                View::dense(g, g_off, rows, cout),
                                ViewMut::dense(dw, tap * cin * cout, cout),
                                true,
                            );
                        }
                    }
                }
                if let Some(b) = b {
                    if let Some(db) = slot(nodes, grads, *b) {
                        for row in g.chunks_exact(cout) {
                            db.iter_mut().zip(row).for_each(|(d, &r)| *d += r);
                        }
                    }
                }
            }
            Op::Attention { q, k, v, heads, probs } => {
                let (groups, nq, d) = (shape(*q)[0], shape(*q)[1], shape(*q)[2]);
                let nk = shape(*k)[1];
                let dh = d / heads;
                let scale = F::one() / F::lit(dh as f64).sqrt();
                let (qv, kv, vv) = (val(*q), val(*k), val(*v));
                let mut dp = vec![F::zero(); nq * nk];
                for gi in 0..groups {
                    for h in 0..*heads {
                        let q_off = gi * nq * d + h * dh;
                        let k_off = gi * nk * d + h * dh;
                        let p_off = (gi * heads + h) * nq * nk;
                        let g_h = View { data: g, offset: q_off, rows: nq, cols: dh, rs: d, cs: 1 };
                        let p = View::dense(probs, p_off, nq, nk);
                        if let Some(dv) = slot(nodes, grads, *v) {
                            gemm(p.t(), g_h, ViewMut { data: dv, offset: k_off, rs: d, cs: 1 }, true);
                        }
                        let q_req = nodes[q.0].requires_grad;
                        let k_req = nodes[k.0].requires_grad;
                        if !q_req && !k_req {
                            continue;
                        }
                        let v_t = View { data: vv, offset: k_off, rows: dh, cols: nk, rs: 1, cs: d };
                        gemm(g_h, v_t, ViewMut::dense(&mut dp, 0, nk), false);
                        for r in 0..nq {
                            let pr = &probs[p_off + r * nk..p_off + (r + 1) * nk];
                            let dr = &mut dp[r * nk..(r + 1) * nk];
                            let dot: F = pr.iter().zip(dr.iter()).map(|(&a, &b)| a * b).sum();
                            for (x, &pv) in dr.iter_mut().zip(pr) {
                                *x = pv * (*x - dot) * scale;
                            }
                        }
                        let ds = View::dense(&dp, 0, nq, nk);
                        if let Some(dq) = slot(nodes, grads, *q) {
                            let k_h = View { data: kv, offset: k_off, rows: nk, cols: dh, rs: d, cs: 1 };
                            gemm(ds, k_h, ViewMut { data: dq, offset: q_off, rs: d, cs: 1 }, true);
                        }
                        if let Some(dk) = slot(nodes, grads, *k) {
                            let q_h = View { data: qv, offset: q_off, rows: nq, cols: dh, rs: d, cs: 1 };
                            gemm(ds.t(), q_h, ViewMut { data: dk, offset: k_off, rs: d, cs: 1 }, true);
                        }
                    }
                }
            }
            Op::GatherRows { x, idx } => {
                if let Some(dx) = slot(nodes, grads, *x) {
                    let row = g.len() / idx.len().max(1);
                    for (r, &src) in idx.iter().enumerate() {
                        let dst = &mut dx[src * row..(src + 1) * row];
                        dst.iter_mut().zip(&g[r * row..(r + 1) * row]).for_each(|(d, &v)| *d += v);
                    }
                }
            }
            Op::MeanAxis { x, axis } => {
                let (outer, len, inner) = axis_split(shape(*x), *axis);
                let inv = F::one() / F::lit(len as f64);
                if let Some(dx) = slot(nodes, grads, *x) {
                    for o in 0..outer {
                        for j in 0..len {
                            for k in 0..inner {
                                dx[(o * len + j) * inner + k] += g[o * inner + k] * inv;
                            }
                        }
                    }
                }
            }
            Op::Sum { x } => {
                if let Some(dx) = slot(nodes, grads, *x) {
                    dx.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::Mean { x } => {
                if let Some(dx) = slot(nodes, grads, *x) {
                    let s = g[0] / F::lit(dx.len() as f64);
                    dx.iter_mut().for_each(|d| *d += s);
                }
            }
            Op::Mse { x, target } => {
                if let Some(dx) = slot(nodes, grads, *x) {
                    let s = F::lit(2.0) * g[0] / F::lit(dx.len() as f64);
                    for ((d, &xv), &t) in dx.iter_mut().zip(val(*x)).zip(target) {
                        *d += s * (xv - t);
                    }
                }
            }
            Op::External { x, grad } => {
                if let Some(dx) = slot(nodes, grads, *x) {
                    dx.iter_mut().zip(grad).for_each(|(d, &e)| *d += g[0] * e);
                }
            }
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

pub(crate) fn gelu<F: Float>(x: F) -> F {
    let inner = F::lit(GELU_C) * (x + F::lit(GELU_A) * x * x * x);
    F::lit(0.5) * x * (F::one() + inner.tanh())
}

fn gelu_grad<F: Float>(x: F) -> F {
    let inner = F::lit(GELU_C) * (x + F::lit(GELU_A) * x * x * x);
    let t = inner.tanh();
    let dinner = F::lit(GELU_C) * (F::one() + F::lit(3.0 * GELU_A) * x * x);
    F::lit(0.5) * (F::one() + t) + F::lit(0.5) * x * (F::one() - t * t) * dinner
}

/// For each kernel tap: (tap, first output row, end output row, first input row).
pub(crate) fn conv_taps(l: usize, k: usize, pad: usize) -> impl Iterator<Item = (usize, usize, usize, usize)> {
    (0..k).filter_map(move |tap| {
        // output row r reads input row r + tap - pad
        let lo = pad.saturating_sub(tap);
        let hi = (l + pad).saturating_sub(tap).min(l);
        (lo < hi).then(|| (tap, lo, hi, lo + tap - pad))
    })
}
