//! Interaction recognition from point-cloud videos: frame sampling, a
//! per-frame point encoder, two-stream temporal aggregation and a
//! transformer classifier, plus data formats, synthetic data and training.

pub mod aggregator;
pub mod config;
pub mod data;
pub mod encoder;
mod error;
pub mod geometry;
pub mod ifs;
pub mod model;
pub mod nn;
pub mod pointcloud;
pub mod seed;
pub mod synth;
pub mod train;
pub mod transformer;

pub use error::{CoreError, Result};
