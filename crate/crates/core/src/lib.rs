#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail these checks

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bench;
pub mod error;
pub mod expr;
pub mod jump;
pub mod math;
pub mod mixture;
pub mod moves;
pub mod prior;
pub mod sampler;

pub use error::{Error, Result};
