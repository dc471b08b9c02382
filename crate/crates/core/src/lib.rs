// `!(x > 0.0)` is used deliberately so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bath;
pub mod cli;
pub mod error;
pub mod linalg;
pub mod mps;
pub mod oracle;
pub mod tebd;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
