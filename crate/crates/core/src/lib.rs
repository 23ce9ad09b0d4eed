//! Gaussian-process forecasting of weekly dengue incidence from climate
//! covariates, with linear and autoregressive baselines and a rolling-origin
//! backtest harness.

// Negated float comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod cli;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod gp;
pub mod hyperopt;
pub mod kernels;
pub mod pipeline;
pub mod preprocess;
pub mod synth;

pub use error::{Error, Result};
