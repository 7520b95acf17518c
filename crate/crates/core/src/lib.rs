// `!(x >= lo)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod association;
pub mod config;
pub mod detection;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod hdmap;
pub mod simulator;
pub mod statefilter;
pub mod tracker;

pub use error::{Error, Result};
