use crate::float::Float;
use crate::params::ParamStore;
use crate::tape::Grads;
use crate::tensor::{Result, TensorError};

/// Adam with bias correction and optional global-norm clipping.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub lr: F,
    pub beta1: F,
    pub beta2: F,
    pub eps: F,
    pub clip_norm: Option<F>,
    step: u64,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Float> Adam<F> {
    pub fn new(lr: F) -> Self {
        Adam { lr, beta1: F::lit(0.9), beta2: F::lit(0.999), eps: F::lit(1e-8), clip_norm: None, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// First and second moments of a parameter (empty before its first update).
    pub fn moments(&self, index: usize) -> (&[F], &[F]) {
        match (self.m.get(index), self.v.get(index)) {
            (Some(m), Some(v)) => (m, v),
            _ => (&[], &[]),
        }
    }

    /// Applies one update to every parameter that has a gradient.
    pub fn step(&mut self, store: &mut ParamStore<F>, grads: &Grads<F>) -> Result<()> {
        for (id, g) in grads.params() {
            if store.tensor(id).shape() != g.shape() {
                return Err(TensorError::shape("adam", store.tensor(id).shape(), g.shape()));
            }
        }
        if self.m.len() < store.len() {
            self.m.resize(store.len(), Vec::new());
            self.v.resize(store.len(), Vec::new());
        }
        let clip = match self.clip_norm {
            Some(c) => {
                let norm = grads.global_norm();
                if norm > c { c / norm } else { F::one() }
            }
            None => F::one(),
        };
        self.step += 1;
        let t = self.step as i32;
        let c1 = F::one() - self.beta1.powi(t);
        let c2 = F::one() - self.beta2.powi(t);
        for (id, g) in grads.params() {
            let p = store.tensor_mut(id).data_mut();
            let (m, v) = (&mut self.m[id.0], &mut self.v[id.0]);
            if m.is_empty() {
                *m = vec![F::zero(); p.len()];
                *v = vec![F::zero(); p.len()];
            }
            for i in 0..p.len() {
                let gi = g.data()[i] * clip;
                m[i] = self.beta1 * m[i] + (F::one() - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (F::one() - self.beta2) * gi * gi;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
