//! No-reference image quality assessment from multi-level pooled CNN features.
//!
//! An image runs once through a pretrained Inception network at its native
//! resolution. Every Inception block's output is reduced by global average
//! pooling, the pooled vectors are concatenated, and a kernel regressor
//! (ε-SVR with an RBF kernel or a Gaussian process with a rational-quadratic
//! kernel) maps the descriptor to a mean opinion score.
//!
//! The crate also carries the evaluation harness: seeded train/validation/test
//! splits, per-layer ablations, cross-database runs and PLCC/SROCC metrics.

pub mod cli;
pub mod datasets;
pub mod error;
pub mod features;
pub mod graph_runtime;
pub mod metrics;
pub mod regressors;

pub use error::{Error, Result};
