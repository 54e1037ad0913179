//! Batch front end: configuration, array files and experiment stages.

pub mod array;
pub mod cli;
pub mod config;
pub mod error;
pub mod image;
pub mod run;

pub use error::{CliError, Result};
