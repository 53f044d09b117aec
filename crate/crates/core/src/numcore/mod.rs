//! Dense numerical kernel: matrices, a gradient tape, AdamW and a
//! finite-difference checker.

mod gradcheck;
mod matrix;
mod optim;
mod scalar;
mod tape;

pub use gradcheck::{check_gradients, GradCheck};
pub use matrix::{l2_normalize_rows, lerp, log_softmax_rows, softmax, Matrix, MIN_ROW_NORM};
pub use optim::{adamw_step, AdamWConfig, AdamWState};
pub use scalar::Scalar;
pub use tape::{dropout, relu, Gradients, Mode, Tape, Var};
