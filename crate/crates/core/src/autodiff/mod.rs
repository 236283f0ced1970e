//! Dense reverse-mode automatic differentiation with differentiable backward.
//!
//! A [`Tape`] records every forward op. [`Tape::grad`] returns plain gradient
//! tensors; [`Tape::grad_graph`] records the backward computation on the same
//! tape, which is what lets a meta-gradient flow through an inner SGD step.

mod check;
pub(crate) mod kernels;
mod tape;
mod tensor;

pub use check::{finite_difference_check, FdError};
pub use kernels::log_softmax_row;
pub use tape::{set_tanh_backward_sign_error, Tape, Var};
pub use tensor::Tensor;

/// A forward or backward op produced a non-finite value.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("non-finite value produced by `{op}` at node {node}")]
pub struct NumericFault {
    pub op: &'static str,
    pub node: usize,
}
