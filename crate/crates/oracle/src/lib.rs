//! Independent numerical oracles for the test suites.
//!
//! Nothing in here knows about Brownian motion. The quadrature routines only
//! see closures, so an integral computed here is an independent check on any
//! closed form it is compared against.

pub mod ks;
pub mod quad;

pub use ks::{ks_critical_value, ks_statistic, ks_statistic_from_density};
pub use quad::{integrate, integrate_2d, integrate_3d, Quad};
