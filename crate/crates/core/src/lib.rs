//! Binary classification with missing features via an ANOVA decomposition of
//! the regression function over observation patterns, per-pattern
//! nearest-neighbour estimation and hard thresholding.
pub mod anova;
pub mod baselines;
pub mod cli;
pub mod data;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod neighbors;
pub mod pattern;
pub mod scenario;

pub use error::{HamError, Result};
pub use pattern::{Pattern, PatternSet};
