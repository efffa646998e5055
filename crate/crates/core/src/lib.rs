// comparisons are written as `!(a < b)` where NaN must take the failing branch
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod bcd;
pub mod bench;
pub mod data;
pub mod error;
pub mod model;
pub mod optim;
pub mod recombination;
pub mod trace;

pub use error::{Error, Result};
