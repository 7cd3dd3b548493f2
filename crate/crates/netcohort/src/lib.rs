//! netcohort: spectral tests for whether a cohort of network nodes shares a
//! common membership profile.
//!
//! The pipeline: generate or ingest a symmetric adjacency matrix, take its
//! leading eigenvectors, form studentized coordinate differences between node
//! pairs, and calibrate the cohort-wide maximum against extreme-value theory.
//! Supporting modules cover the generative models, plug-in covariances,
//! special functions, random-matrix diagnostics, and a Monte Carlo harness.

pub mod covariance;
pub mod distributions;
pub mod error;
pub mod harness;
pub mod ingest;
pub mod inference;
pub mod mat;
pub mod model;
pub mod rmt;
pub mod spectral;

pub use error::{Error, Result};

/// Library version, embedded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
