//! Conditional moments of Brownian motion on `[0, 1]` given its close,
//! maximum and the time of the maximum.

pub mod analytic;
pub mod error;
pub mod estimator;
pub mod moments;
pub mod sampler;
pub mod simulation;
pub mod special;

pub use error::{Error, Result};
