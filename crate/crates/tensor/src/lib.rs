//! Small define-by-run autodiff engine over dense `f32`/`f64` tensors.
//!
//! Covers what the reconstruction networks need: broadcasting arithmetic,
//! reductions, grouped and transposed convolutions, 2-D FFTs on complex-pair
//! tensors, softmax, layer normalization with exposed statistics, and
//! window partitioning for local attention.

pub mod broadcast;
pub mod element;
pub mod error;
pub mod gradcheck;
pub mod ops;
pub mod rng;
pub mod tensor;

pub use element::{DType, Float};
pub use error::{Result, TensorError};
pub use ops::conv::Conv2dOptions;
pub use ops::norm::{NormOutput, NORM_EPS};
pub use ops::shape::PadMode;
pub use ops::window::WindowLayout;
pub use rng::{Rng, RngState};
pub use tensor::{grad_enabled, no_grad, BackwardCtx, BackwardFn, Tensor};
