//! Depth-assisted RGB-D single-object tracking.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod core_tracker;
pub mod error;
pub mod eval;
pub mod frames;
pub mod kvfile;
pub mod maskgen;
pub mod pipeline;
pub mod refiner;
pub mod strategy;
pub mod synth;

pub use error::{Error, Result};
