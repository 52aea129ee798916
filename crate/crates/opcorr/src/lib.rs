//! File formats, datasets, experiment orchestration and the `opcorr` CLI on
//! top of the numerical core.

pub mod artifacts;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod format;
pub mod raster;
pub mod toy_demo;

pub use error::{Error, Result};
