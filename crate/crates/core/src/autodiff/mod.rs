//! Reverse-mode differentiation over the real-pair view of complex tensors,
//! a finite-difference oracle, Adam, and the training loop.
//!
//! Gradients of a real loss `L` with respect to a complex tensor are stored
//! as `∂L/∂re + j·∂L/∂im`.

mod adam;
mod gradcheck;
mod params;
mod tape;
mod train;

pub use adam::{adam_step, AdamConfig};
pub use gradcheck::{
    analytic_gradients, compare_gradients, extrapolated_diff, finite_diff, grad_check, grad_check_with, gradcheck_instance,
    gradcheck_suite, kink_distance, relative_error, GradCheckCase, GradCheckOptions, GradCheckReport, MIN_KINK_DISTANCE,
};
pub use params::{Param, ParamId, ParamStore};
pub use tape::{Gradients, NodeId, Tape};
pub use train::{derive_seed, train, EpochRecord, Schedule, TrainConfig};
