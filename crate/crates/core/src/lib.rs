//! Recurrence and transience tests for diffusions generated by
//! L = L⁰ + ⟨B,∇·⟩, where L⁰ is a weighted divergence-form operator and B a
//! μ-divergence-free drift.

// `!(x > 0.0)` is used on purpose so NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod error;
pub mod expr;
pub mod fit;
pub mod criteria;
pub mod interp;
pub mod lab;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod montecarlo;
pub mod quadrature;
pub mod scale_1d;
pub mod volume_growth;

pub use error::Error;
pub use model::{builtin_model, ModelConfig, ModelSpec};
