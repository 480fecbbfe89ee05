//! Grass-pixel color characteristic simulator.
//!
//! Renders a parametric grass pixel (a yellow canopy with adjustable green
//! blades rising through slits) under an HDR environment, measures the
//! perceived color per blade length and viewpoint, and turns the resulting
//! CIEDE2000 curves into comparisons and 8-bit calibration tables.

pub mod ccm;
pub mod characteristic;
pub mod colorimetry;
pub mod config;
pub mod error;
pub mod lighting;
pub mod math;
pub mod pipeline;
pub mod render;
pub mod scene;

pub use error::{Error, Result};
