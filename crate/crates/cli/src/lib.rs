//! Command-line front end for the twin experiments: configuration layering,
//! run directories with hashed manifests, run comparison and plot data.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod plot;

pub use commands::{compare, plotdata, run, Comparison, PlotKind, RunOptions, RunSummary};
pub use error::{CliError, CliResult};
pub use manifest::Manifest;
