//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Build a [`Tape`], register parameters with [`Tape::leaf`] and inputs with
//! [`Tape::constant`], compose operations on the returned [`Var`] handles and
//! call [`Tape::backward`] on a scalar. The tape is rebuilt every forward pass.

mod backward;
mod gemm;
mod gradcheck;
mod ops;
mod tape;
mod tensor;


pub use backward::{set_corrupt_gelu_backward, Gradients};
pub use gradcheck::{finite_diff_check, GradCheckReport, ParamCheck};
pub use ops::{concat, L2_NORM_FLOOR, LAYER_NORM_EPS};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("{op}: empty axis")]
    EmptyAxis { op: &'static str },
    #[error("{op}: {reason}")]
    InvalidArgument { op: &'static str, reason: String },
    #[error("backward needs a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("non-finite value {value} while {context}")]
    NonFinite { context: String, value: f64 },
}
