//! Batch CLI, artifact workspace and HTTP service for the grass-pixel
//! simulator.

pub mod cli;
pub mod error;
pub mod http;
pub mod jobs;
pub mod runner;
pub mod workspace;

pub use error::{Error, Result};
