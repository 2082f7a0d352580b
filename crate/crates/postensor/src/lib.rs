//! File formats and the `postensor` command line for positive tensor
//! decomposition and completion.
//!
//! The algorithms live in `postensor-core`; this crate reads and writes the
//! tensor, model and observation files and wires them to subcommands.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod commands;
mod error;
pub mod formats;

pub use error::{CliError, Result};
