//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Only the operations the segmentation network needs are provided; each
//! is covered by a finite-difference check in [`gradcheck`].

pub mod checkpoint;
pub mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use params::{ParamGrads, ParamId, ParamStore, Parameter};
pub use tape::{Grads, Tape, Var};
pub use tensor::Tensor;
