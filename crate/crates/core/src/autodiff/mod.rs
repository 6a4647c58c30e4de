//! Dense arrays and tape-based reverse-mode differentiation.
//!
//! The primitive set is exactly what the trust model needs: matmul,
//! elementwise and broadcast arithmetic, concat/slice/transpose/reshape,
//! GELU, softmax, bias-free layer norm, embedding lookup, mean pooling and
//! cross-entropy. [`grad_check`] verifies any composition of them against
//! central differences.

mod array;
mod gradcheck;
pub(crate) mod kernels;
mod tape;

pub use array::NumericArray;
pub use gradcheck::{grad_check, primitive_checks, relative_error, GradCheckOptions, GradCheckReport};
pub use tape::{Along, Tape, Var};
