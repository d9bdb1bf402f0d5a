#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dataset;
pub mod error;
mod fft;
pub mod geometry;
pub mod lct;
pub mod localization;
pub mod particle_filter;
pub mod plot;
pub mod reconstruction;
mod seeds;
pub mod simulator;
pub mod stir;
pub mod tracking;

pub use error::{Error, ErrorCategory, Result};
