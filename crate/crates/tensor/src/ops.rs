//! Forward definitions of the differentiable ops.

use crate::float::{gemm, Float, View, ViewMut};
use crate::tape::{conv_taps, gelu, Op, Tape, Var};
use crate::tensor::{axis_split, Result, Tensor, TensorError};

impl<F: Float> Tape<F> {
    fn tensor(&self, shape: &[usize], data: Vec<F>) -> Tensor<F> {
        Tensor::new(shape, data).expect("op output shape")
    }

    /// `a [.., k] @ b [k, n] -> [.., n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.linear_impl("matmul", a, b, None)
    }

    /// `x [.., in] @ w [in, out] + b [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        self.linear_impl("linear", x, w, b)
    }

    fn linear_impl(&mut self, name: &'static str, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if ws.len() != 2 || xs.is_empty() || xs[xs.len() - 1] != ws[0] {
            return Err(TensorError::shape(name, &xs, &ws));
        }
        let (ni, no) = (ws[0], ws[1]);
        if let Some(b) = b {
            if self.shape(b) != [no] {
                return Err(TensorError::shape(name, &ws, self.shape(b)));
            }
        }
        let rows = self.value(x).numel() / ni;
        let mut out = match b {
            Some(b) => self.value(b).data().repeat(rows),
            None => vec![F::zero(); rows * no],
        };
        gemm(
            View::dense(self.value(x).data(), 0, rows, ni),
            View::dense(self.value(w).data(), 0, ni, no),
            ViewMut::dense(&mut out, 0, no),
            true,
        );
        let mut shape = xs;
        *shape.last_mut().unwrap() = no;
        let value = self.tensor(&shape, out);
        Ok(self.push(value, Op::Linear { x, w, b }))
    }

    /// Elementwise sum; `b` may be a trailing-axes suffix of `a` and is broadcast.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(TensorError::shape("add", sa, sb));
        }
        let bv = self.value(b).data();
        let n = bv.len();
        let data: Vec<F> = self.value(a).data().iter().enumerate().map(|(i, &v)| v + bv[i % n]).collect();
        let value = self.tensor(&sa.to_vec(), data);
        Ok(self.push(value, Op::Add { a, b }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x - y).collect();
        let value = self.tensor(&self.shape(a).to_vec(), data);
        Ok(self.push(value, Op::Sub { a, b }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x * y).collect();
        let value = self.tensor(&self.shape(a).to_vec(), data);
        Ok(self.push(value, Op::Mul { a, b }))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn scale(&mut self, x: Var, s: F) -> Var {
        let data = self.value(x).data().iter().map(|&v| v * s).collect();
        let value = self.tensor(&self.shape(x).to_vec(), data);
        self.push(value, Op::Scale { x, s })
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = self.shape(*parts.first().ok_or_else(|| TensorError::invalid("concat", "no inputs"))?).to_vec();
        if axis >= first.len() {
            return Err(TensorError::invalid("concat", format!("axis {axis} out of range for {first:?}")));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == first.len() && s.iter().zip(&first).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(TensorError::shape("concat", &first, s));
            }
            total += s[axis];
        }
        let (outer, _, inner) = axis_split(&first, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let len = self.shape(p)[axis];
                data.extend_from_slice(&self.value(p).data()[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let value = self.tensor(&shape, data);
        Ok(self.push(value, Op::Concat { parts: parts.to_vec(), axis }))
    }

    /// `x[.., start..end, ..]` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() || start > end || end > s[axis] {
            return Err(TensorError::invalid("slice", format!("range {start}..{end} on axis {axis} of {s:?}")));
        }
        let (outer, len, inner) = axis_split(&s, axis);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * (end - start) * inner);
        for o in 0..outer {
            data.extend_from_slice(&src[(o * len + start) * inner..(o * len + end) * inner]);
        }
        let mut shape = s;
        shape[axis] = end - start;
        let value = self.tensor(&shape, data);
        Ok(self.push(value, Op::Slice { x, axis, start }))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != self.value(x).numel() {
            return Err(TensorError::shape("reshape", self.shape(x), shape));
        }
        let value = self.tensor(shape, self.value(x).data().to_vec());
        Ok(self.push(value, Op::Reshape { x }))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() {
            return Err(TensorError::invalid("softmax", format!("axis {axis} out of range for {s:?}")));
        }
        let (outer, len, inner) = axis_split(&s, axis);
        let mut data = self.value(x).data().to_vec();
        for o in 0..outer {
            for k in 0..inner {
                let idx = |j: usize| (o * len + j) * inner + k;
                let m = (0..len).map(|j| data[idx(j)]).fold(F::neg_infinity(), F::max);
                let mut z = F::zero();
                for j in 0..len {
                    let e = (data[idx(j)] - m).exp();
                    data[idx(j)] = e;
                    z += e;
                }
                for j in 0..len {
                    data[idx(j)] /= z;
                }
            }
        }
        let value = self.tensor(&s, data);
        Ok(self.push(value, Op::Softmax { x, axis }))
    }

    /// Normalizes over the last axis, then applies `gamma * xhat + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: F) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let d = *s.last().ok_or_else(|| TensorError::invalid("layer_norm", "scalar input"))?;
        for p in [gamma, beta] {
            if self.shape(p) != [d] {
                return Err(TensorError::shape("layer_norm", &s, self.shape(p)));
            }
        }
        let xv = self.value(x).data();
        let (gv, bv) = (self.value(gamma).data(), self.value(beta).data());
        let rows = xv.len() / d;
        let mut xhat = Vec::with_capacity(xv.len());
        let mut rstd = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(xv.len());
        let inv_d = F::one() / F::lit(d as f64);
        for row in xv.chunks_exact(d) {
            let mean = row.iter().copied().sum::<F>() * inv_d;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() * inv_d;
            let r = F::one() / (var + eps).sqrt();
            rstd.push(r);
            for (j, &v) in row.iter().enumerate() {
                let h = (v - mean) * r;
                xhat.push(h);
                out.push(h * gv[j] + bv[j]);
            }
        }
        let value = self.tensor(&s, out);
        Ok(self.push(value, Op::LayerNorm { x, gamma, beta, xhat, rstd }))
    }

    /// Tanh approximation of GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let data = self.value(x).data().iter().map(|&v| gelu(v)).collect();
        let value = self.tensor(&self.shape(x).to_vec(), data);
        self.push(value, Op::Gelu { x })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let data = self.value(x).data().iter().map(|&v| F::one() / (F::one() + (-v).exp())).collect();
        let value = self.tensor(&self.shape(x).to_vec(), data);
        self.push(value, Op::Sigmoid { x })
    }

    /// Elementwise `f` with a caller-supplied derivative `df`.
    pub fn map(&mut self, x: Var, f: fn(F) -> F, df: fn(F) -> F) -> Var {
        let data = self.value(x).data().iter().map(|&v| f(v)).collect();
        let value = self.tensor(&self.shape(x).to_vec(), data);
        self.push(value, Op::Map { x, df })
    }

    /// `x [B, L, Cin]` convolved with `w [K, Cin, Cout]` (K odd, same padding).
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if xs.len() != 3 || ws.len() != 3 || xs[2] != ws[1] {
            return Err(TensorError::shape("conv1d", &xs, &ws));
        }
        if ws[0] % 2 == 0 {
            return Err(TensorError::invalid("conv1d", format!("kernel size {} must be odd", ws[0])));
        }
        let (bsz, l, cin) = (xs[0], xs[1], xs[2]);
        let (kk, cout) = (ws[0], ws[2]);
        if let Some(b) = b {
            if self.shape(b) != [cout] {
                return Err(TensorError::shape("conv1d", &ws, self.shape(b)));
            }
        }
        let mut out = match b {
            Some(b) => self.value(b).data().repeat(bsz * l),
            None => vec![F::zero(); bsz * l * cout],
        };
        let (xv, wv) = (self.value(x).data(), self.value(w).data());
        for (tap, lo, hi, src) in conv_taps(l, kk, kk / 2) {
            for bi in 0..bsz {
                gemm(
                    View::dense(xv, (bi * l + src) * cin, hi - lo, cin),
                    View::dense(wv, tap * cin * cout, cin, cout),
                    ViewMut::dense(&mut out, (bi * l + lo) * cout, cout),
                    true,
                );
            }
        }
        let value = self.tensor(&[bsz, l, cout], out);
        Ok(self.push(value, Op::Conv1d { x, w, b }))
    }

    /// Multi-head scaled dot-product attention on `[G, n, D]` groups.
    ///
    /// Head `h` uses feature columns `h*D/heads .. (h+1)*D/heads` of q, k and v.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
        let (qs, ks, vs) = (self.shape(q).to_vec(), self.shape(k).to_vec(), self.shape(v).to_vec());
        if qs.len() != 3 || ks.len() != 3 || qs[0] != ks[0] || qs[2] != ks[2] {
            return Err(TensorError::shape("attention", &qs, &ks));
        }
        if ks != vs {
            return Err(TensorError::shape("attention", &ks, &vs));
        }
        let (groups, nq, d) = (qs[0], qs[1], qs[2]);
        let nk = ks[1];
        if heads == 0 || d % heads != 0 {
            return Err(TensorError::invalid("attention", format!("dim {d} not divisible by {heads} heads")));
        }
        if nk == 0 {
            return Err(TensorError::invalid("attention", "no key tokens"));
        }
        let dh = d / heads;
        let scale = F::one() / F::lit(dh as f64).sqrt();
        let (qv, kv, vv) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        let mut probs = vec![F::zero(); groups * heads * nq * nk];
        let mut out = vec![F::zero(); groups * nq * d];
        for gi in 0..groups {
            for h in 0..heads {
                let q_off = gi * nq * d + h * dh;
                let k_off = gi * nk * d + h * dh;
                let p_off = (gi * heads + h) * nq * nk;
                gemm(
                    View { data: qv, offset: q_off, rows: nq, cols: dh, rs: d, cs: 1 },
                    View { data: kv, offset: k_off, rows: dh, cols: nk, rs: 1, cs: d },
                    ViewMut::dense(&mut probs, p_off, nk),
                    false,
                );
                for row in probs[p_off..p_off + nq * nk].chunks_exact_mut(nk) {
                    let m = row.iter().fold(F::neg_infinity(), |a, &b| a.max(b));
                    let mut z = F::zero();
                    for s in row.iter_mut() {
                        *s = ((*s - m) * scale).exp();
                        z += *s;
                    }
                    row.iter_mut().for_each(|s| *s /= z);
                }
                gemm(
                    View::dense(&probs, p_off, nq, nk),
                    View { data: vv, offset: k_off, rows: nk, cols: dh, rs: d, cs: 1 },
                    ViewMut { data: &mut out, offset: q_off, rs: d, cs: 1 },
                    false,
                );
            }
        }
        let value = self.tensor(&qs, out);
        Ok(self.push(value, Op::Attention { q, k, v, heads, probs }))
    }

    /// Rows of `x` along axis 0, in the order given (indices may repeat).
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.is_empty() {
            return Err(TensorError::invalid("gather_rows", "scalar input"));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= s[0]) {
            return Err(TensorError::invalid("gather_rows", format!("index {bad} out of range for {s:?}")));
        }
        let row: usize = s[1..].iter().product();
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(idx.len() * row);
        for &i in idx {
            data.extend_from_slice(&src[i * row..(i + 1) * row]);
        }
        let mut shape = s;
        shape[0] = idx.len();
        let value = self.tensor(&shape, data);
        Ok(self.push(value, Op::GatherRows { x, idx: idx.to_vec() }))
    }

    /// Mean over `axis`, which is removed from the shape.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() || s[axis] == 0 {
            return Err(TensorError::invalid("mean_axis", format!("axis {axis} of {s:?}")));
        }
        let (outer, len, inner) = axis_split(&s, axis);
        let src = self.value(x).data();
        let inv = F::one() / F::lit(len as f64);
        let mut data = vec![F::zero(); outer * inner];
        for o in 0..outer {
            for j in 0..len {
                for k in 0..inner {
                    data[o * inner + k] += src[(o * len + j) * inner + k];
                }
            }
        }
        data.iter_mut().for_each(|v| *v *= inv);
        let mut shape = s;
        shape.remove(axis);
        let value = self.tensor(&shape, data);
        Ok(self.push(value, Op::MeanAxis { x, axis }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum { x })
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().copied().sum::<F>() / F::lit(t.numel() as f64);
        self.push(Tensor::scalar(s), Op::Mean { x })
    }

    /// `mean((x - target)^2)`.
    pub fn mse(&mut self, x: Var, target: &Tensor<F>) -> Result<Var> {
        if self.shape(x) != target.shape() {
            return Err(TensorError::shape("mse", self.shape(x), target.shape()));
        }
        let xv = self.value(x).data();
        let n = F::lit(xv.len() as f64);
        let s = xv.iter().zip(target.data()).map(|(&a, &b)| (a - b) * (a - b)).sum::<F>() / n;
        Ok(self.push(Tensor::scalar(s), Op::Mse { x, target: target.data().to_vec() }))
    }

    /// A scalar loss computed outside the tape: `value` with `d value / d x = grad`.
    pub fn external_loss(&mut self, x: Var, value: F, grad: Vec<F>) -> Result<Var> {
        if grad.len() != self.value(x).numel() {
            return Err(TensorError::shape("external_loss", self.shape(x), &[grad.len()]));
        }
        Ok(self.push(Tensor::scalar(value), Op::External { x, grad }))
    }
}
