//! Dense matrices, the scalar statistics network with exact backprop, Adam,
//! and gradient utilities.

mod adam;
mod grad;
mod matrix;
mod mlp;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use grad::{
    adaptive_clip, compare_with_finite_differences, grad_check, relative_error, GradCheckReport,
    FD_STEP, REL_ERR_FLOOR,
};
pub use matrix::Matrix;
pub use mlp::{mlp_backward, mlp_forward, mlp_init, Activation, Dense, GradBuffer, MlpParams, Tape};
