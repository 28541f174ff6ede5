//! Dense `f64` tensors, gate nonlinearities, the Adam update and a
//! central-difference gradient oracle.

mod adam;
mod gradcheck;
pub(crate) mod kernels;
pub(crate) mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{finite_diff_grad, DEFAULT_FD_STEP};
pub use tensor::{elementwise, matmul, Activation, Tensor};
