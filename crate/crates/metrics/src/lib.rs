//! Evaluation measures for binary camouflaged / salient object segmentation.
//!
//! Every measure consumes a prediction map with values in `[0, 1]` and a
//! binary ground-truth map of the same shape:
//!
//! - [`mae`]: mean absolute error
//! - [`s_measure`]: structure measure (object + region similarity, `alpha = 0.5`)
//! - [`f_measure_suite`]: weighted F, adaptive-threshold F and max F (`beta^2 = 0.3`)
//! - [`e_measure_suite`]: mean and max enhanced-alignment measure
//!
//! [`evaluate_batch`] averages all of them over a set of samples into a
//! [`MetricReport`].
//!
//! Division guards (`EPS`) are applied only where a denominator is exactly
//! zero, so perfect predictions score exactly `1.0` (and MAE exactly `0.0`).

mod e_measure;
mod edt;
mod f_measure;
mod plane;
mod report;
mod s_measure;

pub use e_measure::{e_measure_suite, e_thresholds, EMeasure};
pub use edt::nearest_foreground;
pub use f_measure::{adaptive_f_measure, f_measure_suite, f_thresholds, max_f_measure, weighted_f_measure, FMeasure};
pub use plane::Plane;
pub use report::{evaluate_batch, evaluate_sample, MetricReport, CSV_COLUMNS};
pub use s_measure::s_measure;

use thiserror::Error;

/// `beta^2` used by every F-measure variant.
pub const BETA2: f64 = 0.3;

/// Number of thresholds in the mean/max sweeps.
pub const N_THRESHOLDS: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("shape mismatch: {0}")]
    BadShape(String),
    #[error("ground truth must be binary (0 or 1), found {0}")]
    BadMask(f64),
    #[error("batch mismatch: {preds} predictions vs {gts} ground truths")]
    BadBatch { preds: usize, gts: usize },
}

pub type Result<T> = std::result::Result<T, MetricError>;

/// Mean absolute error between a prediction and a binary ground truth.
pub fn mae(pred: Plane<'_>, gt: Plane<'_>) -> Result<f64> {
    plane::check_pair(pred, gt)?;
    let sum: f64 = pred.data.iter().zip(gt.data).map(|(p, g)| (p - g).abs()).sum();
    Ok(sum / pred.data.len() as f64)
}
