//! Self-calibrating Gaussian / exponential / generalized Pareto hybrid model.
//!
//! The crate is `no_std` and only needs an allocator. It contains the
//! distribution family ([`model`], [`mixture`]), a small Levenberg-Marquardt
//! solver ([`lm`]), the alternating calibration algorithm ([`calibrator`],
//! [`ggpd`]), classical peaks-over-threshold estimators ([`baselines`]) and
//! the building blocks of the Monte-Carlo validation protocol
//! ([`montecarlo`]). File formats, the CLI and the parallel replicate runner
//! live in the `hybridtail` crate.
#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod baselines;
pub mod calibrator;
pub mod ecdf;
mod error;
pub mod ggpd;
pub mod lm;
pub mod mixture;
pub mod model;
pub mod montecarlo;
pub mod special;

pub use error::{Error, Result};
pub use model::{DerivedParams, HybridModel, ModelParams};
