//! Reverse-mode differentiation: tensors, the recording tape, the optimizer
//! and the finite-difference checker.

pub mod gradcheck;
pub mod optim;
mod scalar;
mod tape;
mod tensor;

pub use gradcheck::grad_check;
pub use optim::{sgd_step, OptimizerState};
pub use scalar::{DType, Scalar};
pub(crate) use tape::Op;
pub use tape::{Tape, TapeMode, Var};
pub use tensor::Tensor;
