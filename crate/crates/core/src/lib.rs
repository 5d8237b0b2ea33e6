//! Controlled-personalization news ranking with a synthetic-reader A/B
//! experiment simulator and the measurement battery used to evaluate it:
//! data cleaning, engagement and journalistic-value metrics, and
//! significance testing.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cleaning;
pub mod config;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod personalize;
pub mod pipeline;
pub mod pool;
pub mod ranker;
pub mod report;
pub mod simulator;
pub mod stats;

pub use error::{Error, Result};
