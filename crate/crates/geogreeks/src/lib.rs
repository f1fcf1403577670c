//! File formats, synthetic market data, run configuration, report files and
//! the `geogreeks` command-line front end over [`geogreeks_core`].

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod report;
pub mod series;
pub mod synth;

pub use error::{Error, Result};
pub use geogreeks_core as core;
