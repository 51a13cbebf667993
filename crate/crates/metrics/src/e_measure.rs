//! Enhanced-alignment measure, mean and max over a threshold sweep.

use serde::{Deserialize, Serialize};

use crate::plane::{check_pair, level};
use crate::{Plane, Result, N_THRESHOLDS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EMeasure {
    pub mean: f64,
    pub max: f64,
}

/// Sweep thresholds `(i + 1) / 256`, `i = 0..256`; foreground when `pred >= t`.
///
/// The all-foreground binarisation (threshold 0) has a zero bias matrix and
/// carries no alignment information, so the grid starts above zero.
pub fn e_thresholds() -> [f64; N_THRESHOLDS] {
    std::array::from_fn(|i| (i + 1) as f64 / N_THRESHOLDS as f64)
}

fn enhanced(a: f64, b: f64) -> f64 {
    let denom = a * a + b * b;
    let align = if denom == 0.0 { 0.0 } else { 2.0 * (a * b) / denom };
    (align + 1.0) * (align + 1.0) / 4.0
}

/// Mean enhanced-alignment score of one binarised prediction, from counts.
fn score_from_counts(n: usize, n_gt: usize, n_pred: usize, tp: usize) -> f64 {
    let sum = if n_gt == 0 {
        (n - n_pred) as f64
    } else if n_gt == n {
        n_pred as f64
    } else {
        let fp = n_pred - tp;
        let fn_ = n_gt - tp;
        let tn = (n - n_pred) - fn_;
        let mu_p = n_pred as f64 / n as f64;
        let mu_g = n_gt as f64 / n as f64;
        enhanced(1.0 - mu_p, 1.0 - mu_g) * tp as f64
            + enhanced(1.0 - mu_p, -mu_g) * fp as f64
            + enhanced(-mu_p, 1.0 - mu_g) * fn_ as f64
            + enhanced(-mu_p, -mu_g) * tn as f64
    };
    sum / n as f64
}

pub(crate) fn e_curve(pred: Plane<'_>, mask: &[bool]) -> [f64; N_THRESHOLDS] {
    let thresholds = e_thresholds();
    let mut fg_hist = [0usize; N_THRESHOLDS + 1];
    let mut bg_hist = [0usize; N_THRESHOLDS + 1];
    for (&p, &g) in pred.data.iter().zip(mask) {
        let l = level(&thresholds, p);
        if g {
            fg_hist[l] += 1;
        } else {
            bg_hist[l] += 1;
        }
    }
    let n = mask.len();
    let n_gt = mask.iter().filter(|&&m| m).count();
    let mut curve = [0.0; N_THRESHOLDS];
    let (mut tp, mut fp) = (0usize, 0usize);
    for i in (0..N_THRESHOLDS).rev() {
        tp += fg_hist[i + 1];
        fp += bg_hist[i + 1];
        curve[i] = score_from_counts(n, n_gt, tp + fp, tp);
    }
    curve
}

pub fn e_measure_suite(pred: Plane<'_>, gt: Plane<'_>) -> Result<EMeasure> {
    let mask = check_pair(pred, gt)?;
    let curve = e_curve(pred, &mask);
    Ok(EMeasure {
        mean: curve.iter().sum::<f64>() / N_THRESHOLDS as f64,
        max: curve.iter().copied().fold(0.0, f64::max),
    })
}
