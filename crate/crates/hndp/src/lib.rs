//! Operational layer around `hndp-core`: TOML run configuration, versioned
//! checkpoints, append-only metrics, demonstration datasets, SVG plots and
//! the operations behind the `hndp` command line.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
mod files;
pub mod metrics;
pub mod plot;

pub use config::{RunConfig, TaskKind};
pub use error::{Error, Result};
