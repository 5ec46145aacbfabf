//! Soil property mapping toolkit.
//!
//! Pipeline stages: point-sample ingestion and descriptive statistics,
//! raster covariate derivation, genetic-algorithm feature selection,
//! cross-validated training of six regression learners, and per-pixel
//! prediction maps with confidence intervals and coverage accounting.

pub mod crossval;
pub mod data;
pub mod error;
pub mod gasel;
pub mod learners;
pub mod mapping;
pub mod metrics;
pub mod raster;
pub mod samples;
pub mod seed;
pub mod stats;
pub mod synthetic;

mod linalg;

pub use error::{Error, Result};
