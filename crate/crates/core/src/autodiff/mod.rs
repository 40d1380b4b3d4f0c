//! Dense `f64` tensors with tape-based reverse-mode differentiation.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, relative_error, GradCheckReport, FD_STEP};
pub use tape::{Padding, Reduce, Tape, Var};
pub(crate) use tape::softmax;
pub use tensor::Tensor;

/// Default clamp on vector norms in cosine similarity.
pub const COSINE_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("log of non-positive value {0}")]
    NonPositiveLog(f64),
    #[error("reduction over an empty axis")]
    EmptyAxis,
    #[error("kernel extent {extent} exceeds padded length {padded}")]
    KernelTooLarge { extent: usize, padded: usize },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("backward already ran on this tape; call zero_grad first")]
    BackwardTwice,
    #[error("non-finite value in {0}")]
    NonFinite(String),
}
