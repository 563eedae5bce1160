//! Blinded sample size recalculation for covariate-adjusted (ANCOVA)
//! analyses of two-arm randomized trials, with the simulation machinery
//! used to study its operating characteristics.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod design;
pub mod error;
pub mod io;
pub mod scenario;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
