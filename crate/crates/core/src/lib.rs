//! Joint training of two temporal convolutional networks for seismic
//! acoustic impedance inversion, coupled by a soft L2 weight-similarity
//! penalty.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod model;
pub mod plot;
pub mod seed;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
