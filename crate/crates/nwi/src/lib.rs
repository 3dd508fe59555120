//! Files, configuration, benchmarks and the command line for `nwi-core`.

pub mod bench;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod parallel;

pub use error::{NwiError, Result};
pub use nwi_core as core;
