//! Pump anomaly detection from 3-axis vibration windows.
//!
//! * [`nn`]: a small trainable 1-D CNN engine.
//! * [`data`]: the sample model, a synthetic vibration generator, NDJSON I/O
//!   and dataset splits.
//! * [`detectors`]: threshold, CNN, ECNN and combined detectors with per-pump
//!   parameter selection.
//! * [`cli`]: the `pump-anomaly` command-line tool.
//! * [`evaluation`]: metrics, leave-one-pump-out cross-validation, design
//!   space exploration and Pareto fronts.

pub mod cli;
pub mod data;
pub mod detectors;
pub mod error;
pub mod evaluation;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
