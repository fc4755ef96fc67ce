//! Central finite-difference verification of backward rules.
//!
//! Errors are reported per block as `max|a - n| / max(max|a|, max|n|, floor)`,
//! which stays meaningful when individual entries are near zero.

use crate::params::ParamStore;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Larger blocks are checked on an evenly spaced subset of entries.
    pub max_entries: usize,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { step: 1e-5, tolerance: 1e-4, max_entries: 64 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockReport {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub blocks: Vec<BlockReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.passed)
    }

    pub fn worst(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_err).fold(0.0, f64::max)
    }
}

/// Gradients smaller than this are treated as zero; it sits well above the
/// round-off of central differences on O(1) losses.
pub const SCALE_FLOOR: f64 = 1e-6;

/// Block-wise `max|a - n| / max(max|a|, max|n|, SCALE_FLOOR)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs()).fold(0.0, f64::max);
    let scale = analytic.iter().chain(numeric).map(|v| v.abs()).fold(SCALE_FLOOR, f64::max);
    diff / scale
}

fn sample_indices(n: usize, max: usize) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    (0..max).map(|k| k * n / max).collect()
}

/// Checks every trainable parameter of `store` against finite differences of `loss`.
pub fn grad_check<L>(store: &mut ParamStore<f64>, mut loss: L, opts: GradCheckOptions) -> GradCheckReport
where
    L: FnMut(&mut Tape<f64>, &ParamStore<f64>) -> Var,
{
    let mut tape = Tape::new();
    let out = loss(&mut tape, store);
    let grads = tape.backward(out).expect("scalar loss");
    let mut eval = |store: &ParamStore<f64>| {
        let mut t = Tape::inference();
        let v = loss(&mut t, store);
        t.value(v).item()
    };

    let ids: Vec<_> = store.ids().filter(|&id| !store.get(id).frozen).collect();
    let mut blocks = Vec::new();
    for id in ids {
        let n = store.tensor(id).numel();
        let idx = sample_indices(n, opts.max_entries);
        let zeros = Tensor::zeros(store.tensor(id).shape());
        let g = grads.param(id).unwrap_or(&zeros);
        let analytic: Vec<f64> = idx.iter().map(|&i| g.data()[i]).collect();
        let mut numeric = Vec::with_capacity(idx.len());
        for &i in &idx {
            let orig = store.tensor(id).data()[i];
            store.tensor_mut(id).data_mut()[i] = orig + opts.step;
            let plus = eval(store);
            store.tensor_mut(id).data_mut()[i] = orig - opts.step;
            let minus = eval(store);
            store.tensor_mut(id).data_mut()[i] = orig;
            numeric.push((plus - minus) / (2.0 * opts.step));
        }
        let err = relative_error(&analytic, &numeric);
        blocks.push(BlockReport { name: store.get(id).name.clone(), checked: idx.len(), max_rel_err: err, passed: err <= opts.tolerance });
    }
    GradCheckReport { tolerance: opts.tolerance, blocks }
}

/// Checks an op's input gradients. The op output is reduced with fixed
/// non-uniform weights so that shift-invariant ops (softmax) are still probed.
pub fn grad_check_inputs<G>(inputs: &[Tensor<f64>], op: G, opts: GradCheckOptions) -> GradCheckReport
where
    G: Fn(&mut Tape<f64>, &[Var]) -> Var,
{
    let weighted = |tape: &mut Tape<f64>, vars: &[Var]| {
        let y = op(tape, vars);
        let shape = tape.shape(y).to_vec();
        let n: usize = shape.iter().product();
        let w: Vec<f64> = (0..n).map(|i| (1.3 * i as f64 + 0.7).sin() + 0.25).collect();
        let w = tape.constant(Tensor::new(&shape, w).expect("weights"));
        let p = tape.mul(y, w).expect("same shape");
        tape.sum(p)
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = weighted(&mut tape, &vars);
    let grads = tape.backward(out).expect("scalar loss");

    let eval = |inputs: &[Tensor<f64>]| {
        let mut t = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|x| t.leaf(x.clone(), false)).collect();
        let v = weighted(&mut t, &vars);
        t.value(v).item()
    };

    let mut work = inputs.to_vec();
    let mut blocks = Vec::new();
    for (k, &var) in vars.iter().enumerate() {
        let idx = sample_indices(work[k].numel(), opts.max_entries);
        let zeros = vec![0.0; work[k].numel()];
        let g = grads.wrt(var).unwrap_or(&zeros);
        let analytic: Vec<f64> = idx.iter().map(|&i| g[i]).collect();
        let mut numeric = Vec::with_capacity(idx.len());
        for &i in &idx {
            let orig = work[k].data()[i];
            work[k].data_mut()[i] = orig + opts.step;
            let plus = eval(&work);
            work[k].data_mut()[i] = orig - opts.step;
            let minus = eval(&work);
            work[k].data_mut()[i] = orig;
            numeric.push((plus - minus) / (2.0 * opts.step));
        }
        let err = relative_error(&analytic, &numeric);
        blocks.push(BlockReport { name: format!("input{k}"), checked: idx.len(), max_rel_err: err, passed: err <= opts.tolerance });
    }
    GradCheckReport { tolerance: opts.tolerance, blocks }
}
