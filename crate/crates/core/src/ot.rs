//! Earth-mover matching between point sets.
//!
//! The transport plan between a ground-truth set `P` (M points) and a
//! prediction `Q` (N points) is the entropically regularized optimum of
//! `sum_ij gamma_ij C_ij` with uniform marginals `1/M` and `1/N`, found by
//! Sinkhorn-Knopp iterations on the dual potentials in the log domain.
//! The earth-mover value is `sum_ij gamma_ij C_ij`; its gradient with respect
//! to `Q` is taken with the plan held fixed. That gradient is exact for the
//! entropic objective `<gamma, C> + eps * KL(gamma | a b^T)` the solver
//! minimizes, which is reported alongside the plain transport cost.

use itertools::Itertools;
use thiserror::Error;

use crate::pointset::PointSet;

/// Distances below this contribute no gradient direction.
const GRAD_MIN_DIST: f64 = 1e-12;
/// Largest set size the permutation oracle accepts.
pub const ORACLE_MAX: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum OtError {
    #[error("cost matrix entry ({row}, {col}) is not finite")]
    NonFiniteCost { row: usize, col: usize },
    #[error("point sets must be non-empty")]
    EmptySet,
    #[error("regularization must be positive, got {0}")]
    BadEpsilon(f64),
    #[error("max_iters must be at least 1")]
    NoIterations,
    #[error("exact oracle needs equal sizes up to {ORACLE_MAX}, got {m} and {n}")]
    OracleSize { m: usize, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtParams {
    pub eps: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for OtParams {
    fn default() -> Self {
        OtParams { eps: 0.01, max_iters: 500, tol: 1e-6 }
    }
}

/// Pairwise Euclidean distances, row-major `rows x cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl CostMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged cost matrix");
        CostMatrix { rows: rows.len(), cols, data: rows.concat() }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn transpose(&self) -> CostMatrix {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.get(i, j));
            }
        }
        CostMatrix { rows: self.cols, cols: self.rows, data }
    }
}

pub fn cost_matrix(p: &PointSet, q: &PointSet) -> CostMatrix {
    let mut data = Vec::with_capacity(p.len() * q.len());
    for a in &p.points {
        for b in &q.points {
            data.push((a[0] - b[0]).hypot(a[1] - b[1]));
        }
    }
    CostMatrix { rows: p.len(), cols: q.len(), data }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub rows: usize,
    pub cols: usize,
    /// Row-major coupling.
    pub gamma: Vec<f64>,
    pub row_marginal: Vec<f64>,
    pub col_marginal: Vec<f64>,
    pub epsilon: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl TransportPlan {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.gamma[i * self.cols + j]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.gamma.chunks(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for row in self.gamma.chunks(self.cols) {
            for (acc, v) in s.iter_mut().zip(row) {
                *acc += v;
            }
        }
        s
    }

    /// Largest absolute deviation of either marginal from its target.
    pub fn marginal_error(&self) -> f64 {
        let r = self.row_sums().iter().zip(&self.row_marginal).map(|(s, a)| (s - a).abs()).fold(0.0, f64::max);
        let c = self.col_sums().iter().zip(&self.col_marginal).map(|(s, b)| (s - b).abs()).fold(0.0, f64::max);
        r.max(c)
    }

    pub fn cost(&self, c: &CostMatrix) -> f64 {
        self.gamma.iter().zip(&c.data).map(|(g, c)| g * c).sum()
    }

    /// `eps * KL(gamma | a b^T)`.
    pub fn entropy_term(&self) -> f64 {
        let mut kl = 0.0;
        for (i, row) in self.gamma.chunks(self.cols).enumerate() {
            for (j, &g) in row.iter().enumerate() {
                if g > 0.0 {
                    kl += g * (g / (self.row_marginal[i] * self.col_marginal[j])).ln();
                }
            }
        }
        self.epsilon * kl
    }
}

/// `-eps * log sum_k exp(x_k / eps)` evaluated stably; `x` is overwritten.
fn soft_min(x: &mut [f64], eps: f64) -> f64 {
    let m = x.iter().copied().fold(f64::INFINITY, f64::min);
    let s: f64 = x.iter().map(|v| (-(v - m) / eps).exp()).sum();
    m - eps * s.ln()
}

/// Entropic optimal transport with uniform marginals.
///
/// Convergence is declared when the largest marginal violation drops below
/// `tol`. Column marginals are exact after every half-step, so the row
/// violation of the current potentials is read off the next row update
/// without materializing the plan.
pub fn sinkhorn(c: &CostMatrix, params: &OtParams) -> Result<TransportPlan, OtError> {
    let OtParams { eps, max_iters, tol } = *params;
    if !(eps > 0.0) {
        return Err(OtError::BadEpsilon(eps));
    }
    if max_iters == 0 {
        return Err(OtError::NoIterations);
    }
    let (m, n) = (c.rows, c.cols);
    if m == 0 || n == 0 {
        return Err(OtError::EmptySet);
    }
    if let Some(k) = c.data.iter().position(|v| !v.is_finite()) {
        return Err(OtError::NonFiniteCost { row: k / n, col: k % n });
    }

    let log_a = -(m as f64).ln();
    let log_b = -(n as f64).ln();
    let mut f = vec![0.0; m];
    let mut g = vec![0.0; n];
    let mut f_next = vec![0.0; m];
    let mut scratch = vec![0.0; m.max(n)];
    let mut iterations = 0;
    let mut converged = false;
    let a = 1.0 / m as f64;

    for it in 0..=max_iters {
        // f_i <- eps log a_i + softmin_j (C_ij - g_j)
        for i in 0..m {
            let row = &c.data[i * n..(i + 1) * n];
            for ((s, cij), gj) in scratch[..n].iter_mut().zip(row).zip(&g) {
                *s = cij - gj;
            }
            f_next[i] = eps * log_a + soft_min(&mut scratch[..n], eps);
        }
        if it > 0 {
            // row sum of the current plan is a_i * exp((f_i - f_next_i) / eps)
            let err = f.iter().zip(&f_next).map(|(fo, fnew)| (a * ((fo - fnew) / eps).exp() - a).abs()).fold(0.0, f64::max);
            if err < tol {
                converged = true;
                break;
            }
        }
        if it == max_iters {
            break;
        }
        std::mem::swap(&mut f, &mut f_next);
        for j in 0..n {
            for (i, s) in scratch[..m].iter_mut().enumerate() {
                *s = c.data[i * n + j] - f[i];
            }
            g[j] = eps * log_b + soft_min(&mut scratch[..m], eps);
        }
        iterations += 1;
    }

    let mut gamma = Vec::with_capacity(m * n);
    for i in 0..m {
        for j in 0..n {
            gamma.push(((f[i] + g[j] - c.data[i * n + j]) / eps).exp());
        }
    }
    Ok(TransportPlan {
        rows: m,
        cols: n,
        gamma,
        row_marginal: vec![a; m],
        col_marginal: vec![1.0 / n as f64; n],
        epsilon: eps,
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmdResult {
    /// Transport cost `sum_ij gamma_ij C_ij`.
    pub value: f64,
    /// The regularized objective at the returned plan; `grad_q` is its
    /// gradient when the plan has converged.
    pub entropic_value: f64,
    /// d value / d q_j with the plan held fixed.
    pub grad_q: Vec<[f64; 2]>,
    pub plan: TransportPlan,
}

/// Earth-mover distance from ground truth `p` to prediction `q`.
pub fn emd(p: &PointSet, q: &PointSet, params: &OtParams) -> Result<EmdResult, OtError> {
    if p.is_empty() || q.is_empty() {
        return Err(OtError::EmptySet);
    }
    let c = cost_matrix(p, q);
    let plan = sinkhorn(&c, params)?;
    let value = plan.cost(&c);
    let mut grad_q = vec![[0.0; 2]; q.len()];
    for (i, pi) in p.points.iter().enumerate() {
        for (j, (qj, gj)) in q.points.iter().zip(grad_q.iter_mut()).enumerate() {
            let d = c.get(i, j);
            if d < GRAD_MIN_DIST {
                continue;
            }
            let w = plan.get(i, j) / d;
            gj[0] += w * (qj[0] - pi[0]);
            gj[1] += w * (qj[1] - pi[1]);
        }
    }
    let entropic_value = value + plan.entropy_term();
    Ok(EmdResult { value, entropic_value, grad_q, plan })
}

/// Exact uniform-marginal earth-mover distance for equal-size sets, by
/// scanning every permutation (optimal plans are permutations when M = N).
pub fn exact_emd_oracle(p: &PointSet, q: &PointSet) -> Result<f64, OtError> {
    let (m, n) = (p.len(), q.len());
    if m != n || m == 0 || m > ORACLE_MAX {
        return Err(OtError::OracleSize { m, n });
    }
    let c = cost_matrix(p, q);
    let best = (0..n)
        .permutations(n)
        .map(|perm| perm.iter().enumerate().map(|(i, &j)| c.get(i, j)).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    Ok(best / m as f64)
}
