//! Gaussian process models for constrained rigid-body dynamics.
//!
//! The central idea: place a GP prior on the unconstrained-plus-non-ideal
//! acceleration `ā` and push it through the affine Udwadia-Kalaba map
//! `q̈ = L b + T ā`. The resulting GP's mean and samples satisfy the
//! constraining equation `A q̈ = b` exactly.

pub mod datagen;
pub mod error;
pub mod eval;
pub mod gp;
pub mod gp2;
pub mod mechanics;
pub mod numerics;
pub mod systems;
pub mod train;

pub use error::{Error, Result};

/// Library version, stamped into experiment outputs.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
