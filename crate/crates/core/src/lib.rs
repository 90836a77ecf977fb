//! Complementary intermittently nonlinear filtering (CINF) for mitigating
//! outlier interference hidden under a signal of interest, plus the
//! simulation harness around it.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod adc;
pub mod caf;
pub mod config;
pub mod demos;
pub mod filters;
pub mod metrics;
pub mod robust;
pub mod scenarios;
pub mod signal;
pub mod sweep;

pub use error::{Error, Result};
