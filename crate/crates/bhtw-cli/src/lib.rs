//! Command-line driver for the chain-transport toolkit: configuration
//! parsing, hashed run manifests, the run/sweep executors, SVG plotting, and
//! the validation/oracle batteries.
//!
//! The binary (`bhtw`) is a thin dispatcher over these modules; everything
//! here is a library so integration tests can exercise the full pipeline in
//! process.

pub mod checks;
pub mod config;
pub mod error;
pub mod manifest;
pub mod oracle;
pub mod plot;
pub mod runner;
pub mod sweep;

pub use error::{CliError, Result, EXIT_NUMERIC, EXIT_VALIDATION};
