//! High-dimensional forecasting and nowcasting toolkit.
//!
//! The crate is organised around the estimation pipeline:
//!
//! - [`datavintage`]: vintage-aware storage of releases and revisions, as-of
//!   snapshots and mixed-frequency alignment.
//! - [`lagpoly`]: MIDAS lag-polynomial dictionaries and the grouped design
//!   matrix.
//! - [`sglasso`]: sparse-group LASSO for time series and panels.
//! - [`tscv`]: leave-one-out cross-validation with a gap.
//! - [`hdinfer`]: debiased inference, HAC long-run variance and the Granger
//!   causality Wald test.
//! - [`asymclass`]: cost-sensitive weighted logistic classification.
//! - [`tensorfac`]: tensor matricization, tensor PCA and eigenvalue-ratio rank
//!   tests.

pub mod asymclass;
pub mod datavintage;
pub mod error;
pub mod hdinfer;
pub mod lagpoly;
pub mod linalg;
pub mod seeds;
pub mod sglasso;
pub mod tensorfac;
pub mod tscv;

pub use error::{Error, Result};
