//! Batch pipeline behind the `glcmfuse` binary.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod lock;
pub mod report;
pub mod synth;

pub use commands::{execute, Command};
pub use error::{CliError, CliResult};
