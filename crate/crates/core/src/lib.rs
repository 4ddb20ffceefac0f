//! Real-to-sim-to-real episode synthesis for robot manipulation datasets.
//!
//! A recorded pick-and-place episode is replayed kinematically against a
//! different object, validated, rendered, and composited over the inpainted
//! real background. The recorded actions are kept bit-for-bit.

pub mod episode;
pub mod error;
pub mod exchange;
pub mod fixtures;
pub mod geometry;
pub mod pipeline;
pub mod quality;
pub mod raster;
pub mod render;
pub mod replay;
pub mod scene;

pub use error::{Error, Result};
