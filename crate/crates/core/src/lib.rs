//! Numerical model of a light-adjustable photoacoustic probe.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod fmt;
pub mod illumination;
pub mod io;
pub mod metrics;
pub mod pa_forward;
pub mod recon;
pub mod zoom;

pub use error::{Error, ErrorKind, Result};
