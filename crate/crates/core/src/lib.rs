//! Residual-CNN pansharpening with target-adaptive fine-tuning.

pub mod adapt;
pub mod bench;
pub mod config;
pub mod dsp;
pub mod error;
pub mod nn;
pub mod optim;
pub mod quality;
pub mod raster;

pub use error::{Error, Result};
