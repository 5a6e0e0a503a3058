//! Dense NCHW tensors with a reverse-mode tape covering the layers a small
//! fully convolutional network needs: convolution, batch normalisation,
//! ReLU, 2×2 max pooling and bilinear upsampling, plus Adam and a
//! finite-difference gradient checker.

mod error;
pub mod gradcheck;
mod ops;
mod optim;
mod param;
mod real;
mod tape;
mod tensor;

pub use error::{AutodiffError, Result};
pub use gradcheck::{finite_difference_check, GradCheckReport};
pub use optim::Adam;
pub use param::{AdamState, Parameter};
pub use real::Real;
pub use tape::{CustomOp, Gradients, NormMode, RunningStats, Tape, Var};
pub use tensor::Tensor;
