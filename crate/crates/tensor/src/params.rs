use std::collections::HashMap;

use crate::float::Float;
use crate::tensor::{Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Param<F> {
    /// Dotted path, unique within a store.
    pub name: String,
    pub tensor: Tensor<F>,
    /// Frozen parameters enter the tape as constants.
    pub frozen: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore<F> {
    params: Vec<Param<F>>,
    index: HashMap<String, ParamId>,
}

impl<F: Float> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new(), index: HashMap::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<F>) -> Result<ParamId> {
        let name = name.into();
        if name.is_empty() {
            return Err(TensorError::invalid("param", "empty name"));
        }
        if self.index.contains_key(&name) {
            return Err(TensorError::invalid("param", format!("duplicate name {name}")));
        }
        let id = ParamId(self.params.len());
        self.index.insert(name.clone(), id);
        self.params.push(Param { name, tensor, frozen: false });
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Param<F> {
        &self.params[id.0]
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor<F> {
        &self.params[id.0].tensor
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        &mut self.params[id.0].tensor
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<F>> {
        self.id(name).map(|id| self.tensor(id))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Parameters in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<F>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    /// Total scalar count, optionally restricted to names with `prefix`.
    pub fn count(&self, prefix: &str) -> usize {
        self.params.iter().filter(|p| p.name.starts_with(prefix)).map(|p| p.tensor.numel()).sum()
    }

    /// Sets the frozen flag on every parameter whose name starts with `prefix`.
    pub fn set_frozen(&mut self, prefix: &str, frozen: bool) {
        for p in self.params.iter_mut().filter(|p| p.name.starts_with(prefix)) {
            p.frozen = frozen;
        }
    }

    pub fn cast<G: Float>(&self) -> ParamStore<G> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param { name: p.name.clone(), tensor: p.tensor.cast(), frozen: p.frozen })
                .collect(),
            index: self.index.clone(),
        }
    }

    /// Copies values of same-named parameters from `other`; returns how many matched.
    pub fn load_from(&mut self, other: &ParamStore<F>) -> Result<usize> {
        let mut n = 0;
        for p in &mut self.params {
            if let Some(src) = other.by_name(&p.name) {
                if src.shape() != p.tensor.shape() {
                    return Err(TensorError::shape("load_from", p.tensor.shape(), src.shape()));
                }
                p.tensor = src.clone();
                n += 1;
            }
        }
        Ok(n)
    }
}
