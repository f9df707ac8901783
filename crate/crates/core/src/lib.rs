//! Robustness evaluation toolkit for motion-forecasting models.
//!
//! Scenarios are perturbed by deleting agents according to causal labels,
//! predictions on the original and perturbed scenes are compared with
//! displacement and trajectory-set metrics, and the results are summarized,
//! sliced and exported as CSV. Built-in baseline predictors and a synthetic
//! scenario generator with known causal structure exercise the full pipeline.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod baselines;
pub mod cli;
pub mod error;
pub mod labels;
pub mod metrics;
pub mod perturb;
pub mod report;
pub mod scenario;
pub mod seed;
pub mod synthgen;

pub use error::{Error, Result};
