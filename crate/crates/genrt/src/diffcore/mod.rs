//! Define-by-run reverse-mode autodiff over dense f64 tensors, plus the
//! optimizers used by the training loops.

pub mod ops;
pub mod optim;
mod tensor;

pub use optim::{OptimConfig, OptimKind, Optimizer, Schedule};
pub use tensor::{DiffError, Result, Tensor};
