//! Reverse-mode automatic differentiation over dense `f64` arrays.

pub mod cases;
mod gradcheck;
mod kernels;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_check, GradCheckReport, DEFAULT_STEP};
pub use kernels::{gelu, sigmoid, swish};
pub use tape::{BackwardFault, Gradients, Tape, Var};
pub use tensor::Tensor;
