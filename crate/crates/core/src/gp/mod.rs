//! Gaussian process regression with multi-output kernels.

pub mod kernel;
pub mod model;

pub use kernel::{Kernel, ParamKind, ScalarKernel};
pub use model::{flatten, sample_mvn, unflatten, GpModel, Mean, PosteriorGp};
