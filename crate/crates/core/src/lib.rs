//! Thompson-sampling active learning control for unknown nonlinear plants.
//!
//! Controllers live in a product of convex hulls spanned by subset basis
//! functions carved from a known initial law. A finite set of candidate
//! cost densities over a controller grid carries the posterior; each segment
//! samples a density, acts greedily on it, and updates by likelihood ratio.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod approximation;
pub mod cost;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod function_space;
pub mod metrics;
pub mod plant;
pub mod poly;
pub mod posterior;
pub mod seed;

pub use error::{Error, Result};
pub use exec::Execution;
