//! Configuration, flat-file formats and pipeline stages behind the `fgp`
//! binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use config::RunConfig;
pub use error::{CliError, Result};
