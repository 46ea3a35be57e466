//! Criticality-weighted sensor placement on the faces of a box-shaped vehicle.
//!
//! Sensor configurations (type, face cell, yaw) are scored against a weighted
//! region-of-interest point cloud and selected with exact, greedy, annealing or
//! variational-quantum solvers.

pub mod annealer;
pub mod config;
pub mod coverage;
pub mod error;
pub mod fixed_count;
pub mod geometry;
pub mod pipeline;
pub mod reporting;
pub mod roi;
pub mod setcover;
pub mod vqe;

pub use error::{Error, Result};
