//! Maximum-likelihood hyperparameter fitting.

pub mod family;
pub mod fit;
pub mod lbfgsb;

pub use family::{fit_family, FittedModel, ModelFamily, ModelFile};
pub use fit::{fit, init_hyperparameters, trace_csv, FitResult, RestartTrace, TrainConfig, Trainable};
