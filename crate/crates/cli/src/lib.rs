//! Batch front end for the reconstruction: synthetic data, preprocessing,
//! inversion and reports, with their file formats.

pub mod config;
pub mod error;
pub mod io;
pub mod phantom;
pub mod pipeline;
pub mod report;

pub use config::RunConfig;
pub use error::{CliError, Result};
pub use phantom::Phantom;
