//! Synthetic data, evaluation metrics, baselines and file formats.

pub mod baseline;
pub mod config;
pub mod io;
pub mod metrics;
pub mod noise;
pub mod scene;
