//! Command-line front end and file formats for `nrdf-core`.

pub mod commands;
pub mod error;
pub mod formats;
pub mod manifest;
pub mod parallel;
pub mod verify;

pub use error::{CliError, Result};
