//! Tape-based reverse-mode differentiation, tanh networks and Adam.

mod adam;
mod matrix;
mod mlp;
mod tape;

pub use adam::{adam_step, AdamState};
pub use matrix::Matrix;
pub use mlp::{mlp_forward, parameter_count, MlpNodes, MlpParams};
pub use tape::{Gradients, NodeId, RowMap, ScalarMap, Tape};
