//! File formats, experiment harness and command-line front end for `symreg-core`.

pub mod artifacts;
pub mod cli;
pub mod config;
pub mod csv_io;
pub mod error;
pub mod finance;
pub mod harness;

pub use error::{AppError, AppResult};
