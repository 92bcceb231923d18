//! Blindspot-discovery benchmarking: synthetic datasets with induced
//! blindspots, the PlaneSpot discovery method, and ground-truth metrics.

pub mod blindspots;
pub mod cluster;
pub mod embed;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod scenegen;

pub use error::{Error, Result};
