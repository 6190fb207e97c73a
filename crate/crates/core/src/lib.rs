// `!(a < b)` style comparisons are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod local;
pub mod models;
pub mod operator;
pub mod solver;

pub use error::{Error, Result};
