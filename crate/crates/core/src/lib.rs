//! Connection-adjusted second-order Greeks, execution-cost geometry and the
//! numerical kernels behind them.
//!
//! The crate is `no_std` (with `alloc`). File formats, configuration and the
//! command-line front end live in the companion `geogreeks` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod backtest;
pub mod book;
pub mod calibration;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod liquidity;
pub mod penalties;
pub mod pricing;
pub mod reconstruction;
pub mod special;

pub use error::{Error, Result};
