//! File formats, experiment configuration and the batch runner around
//! `wernet-core`.
//!
//! Formats: `VXG1` grids, `IMG1` images, `WEN1` encoder checkpoints, `RDS1`
//! traced-dataset caches, 16-bit PGM exports and CSV metric logs. The runner
//! turns one JSON config into a directory of artifacts plus a checksummed
//! manifest.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod formats;
pub mod metrics_log;
pub mod parallel;
pub mod seeds;
pub mod slices;

pub use error::{Error, Result};
pub use wernet_core as core;
