//! Predictive pre-scaling for serverless query workloads.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod arrival;
pub mod exec;
pub mod harness;
pub mod intensity;
pub mod nhpp;
pub mod periodicity;
pub mod planner;
pub mod rng;
pub mod sim;
pub mod trace;

pub use error::{Error, Result};
