//! Dense tensor arithmetic with reverse-mode automatic differentiation,
//! sized for MLP-scale networks and per-sample attack loops.
//!
//! Everything is 64-bit: the attack loop's convergence test works at the
//! 1e-5 scale, where single-precision accumulation is not trustworthy.
//! Non-finite intermediate values abort the operation with an error instead
//! of propagating.

mod adam;
pub mod check;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use tape::{kl_gaussian, BatchMoments, Gradients, Tape, Var};
pub use tensor::Tensor;
