use thiserror::Error;

use crate::float::Float;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    Shape { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },
}

impl TensorError {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        TensorError::Shape { op, lhs: lhs.to_vec(), rhs: rhs.to_vec() }
    }

    pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        TensorError::Invalid { op, msg: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Dense row-major array. A zero-length shape is a scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Float> Tensor<F> {
    pub fn new(shape: &[usize], data: Vec<F>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(TensorError::shape("tensor", shape, &[data.len()]));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, F::zero())
    }

    pub fn full(shape: &[usize], v: F) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![v; shape.iter().product()] }
    }

    pub fn scalar(v: F) -> Self {
        Tensor { shape: Vec::new(), data: vec![v] }
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| F::lit(v)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> F {
        assert_eq!(self.data.len(), 1, "item() on shape {:?}", self.shape);
        self.data[0]
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn cast<G: Float>(&self) -> Tensor<G> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|v| G::lit(v.as_f64())).collect() }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.as_f64()).collect()
    }
}

/// Splits `shape` around `axis` into (outer, len, inner) extents.
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_checks_length() {
        assert!(Tensor::<f64>::new(&[2, 3], vec![0.0; 6]).is_ok());
        let err = Tensor::<f64>::new(&[2, 3], vec![0.0; 5]).unwrap_err();
        assert_eq!(err.to_string(), "tensor: shape mismatch [2, 3] vs [5]");
        assert_eq!(Tensor::<f32>::scalar(2.0).numel(), 1);
    }

    #[test]
    fn cast_round_trip() {
        let t = Tensor::<f32>::from_f64(&[3], &[0.5, -1.25, 3.0]).unwrap();
        assert_eq!(t.cast::<f64>().cast::<f32>(), t);
    }
}
