//! Reverse-mode automatic differentiation over dense row-major tensors.

pub mod checkpoint;
mod float;
pub mod gradcheck;
mod ops;
pub mod optim;
pub mod params;
mod tape;
pub mod tensor;

pub use float::Float;
pub use gradcheck::{grad_check, grad_check_inputs, GradCheckOptions, GradCheckReport};
pub use optim::Adam;
pub use params::{Param, ParamId, ParamStore};
pub use tape::{Grads, Tape, Var};
pub use tensor::{Result, Tensor, TensorError};
