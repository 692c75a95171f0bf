//! Braided-stent deployment in idealized aneurysmal arteries and a reduced-order
//! surrogate of the deployed configuration.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod container;
pub mod dataset;
pub mod error;
pub mod fem;
pub mod mesh;
pub mod spatial;
pub mod standardize;
pub mod stent;
pub mod vessel;

pub use error::{Error, Result};
