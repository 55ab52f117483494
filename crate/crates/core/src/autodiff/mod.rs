//! Dense 2-D tensors and a recording tape with reverse-mode gradients.
//!
//! Every value is a row-major `rows x cols` matrix of `f64`; scalars are
//! `1 x 1`. There is no implicit broadcasting apart from scalar-tensor
//! operations, so shapes have to line up exactly (tile constants
//! explicitly).

mod adam;
pub mod gradcheck;
mod sinkhorn;
mod tape;
mod tensor;

pub use adam::{adam_step, Adam, AdamState};
pub use sinkhorn::{sinkhorn_plan, SinkhornPlan};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

/// Clamp applied to probabilities before taking logarithms.
pub const PROB_EPS: f64 = 1e-12;
