//! F-measure family: dependency-weighted F, adaptive-threshold F and the
//! maximum over a 256-threshold sweep.

use serde::{Deserialize, Serialize};

use crate::edt::nearest_foreground;
use crate::plane::{check_pair, level};
use crate::{Plane, Result, BETA2, N_THRESHOLDS};

const EPS: f64 = f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FMeasure {
    pub weighted: f64,
    pub adaptive: f64,
    pub max: f64,
}

/// Sweep thresholds `i / 255`, `i = 0..256`; a pixel is foreground when `pred >= t`.
pub fn f_thresholds() -> [f64; N_THRESHOLDS] {
    std::array::from_fn(|i| i as f64 / 255.0)
}

pub fn f_measure_suite(pred: Plane<'_>, gt: Plane<'_>) -> Result<FMeasure> {
    Ok(FMeasure {
        weighted: weighted_f_measure(pred, gt)?,
        adaptive: adaptive_f_measure(pred, gt)?,
        max: max_f_measure(pred, gt)?,
    })
}

fn f_score(precision: f64, recall: f64) -> f64 {
    let num = (1.0 + BETA2) * precision * recall;
    if num == 0.0 {
        0.0
    } else {
        num / (BETA2 * precision + recall)
    }
}

/// F at the adaptive threshold `min(2 * mean(pred), 1)`.
pub fn adaptive_f_measure(pred: Plane<'_>, gt: Plane<'_>) -> Result<f64> {
    let mask = check_pair(pred, gt)?;
    let mean = pred.data.iter().sum::<f64>() / pred.len() as f64;
    let threshold = (2.0 * mean).min(1.0);
    let (mut tp, mut positives) = (0usize, 0usize);
    for (&p, &g) in pred.data.iter().zip(&mask) {
        if p >= threshold {
            positives += 1;
            if g {
                tp += 1;
            }
        }
    }
    if tp == 0 {
        return Ok(0.0);
    }
    let n_fg = mask.iter().filter(|&&m| m).count();
    Ok(f_score(tp as f64 / positives as f64, tp as f64 / n_fg as f64))
}

/// Per-threshold F values over [`f_thresholds`].
pub(crate) fn f_curve(pred: Plane<'_>, mask: &[bool]) -> [f64; N_THRESHOLDS] {
    let thresholds = f_thresholds();
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
    let n_fg = mask.iter().filter(|&&m| m).count().max(1) as f64;
    let mut curve = [0.0; N_THRESHOLDS];
    let (mut tp, mut fp) = (0usize, 0usize);
    // threshold i selects pixels whose level exceeds i
    for i in (0..N_THRESHOLDS).rev() {
        tp += fg_hist[i + 1];
        fp += bg_hist[i + 1];
        let positives = (tp + fp).max(1) as f64;
        curve[i] = f_score(tp as f64 / positives, tp as f64 / n_fg);
    }
    curve
}

pub fn max_f_measure(pred: Plane<'_>, gt: Plane<'_>) -> Result<f64> {
    let mask = check_pair(pred, gt)?;
    Ok(f_curve(pred, &mask).into_iter().fold(0.0, f64::max))
}

/// 7x7 Gaussian, sigma 5, normalised to unit sum.
fn gaussian_kernel() -> [[f64; 7]; 7] {
    let sigma = 5.0f64;
    let mut k = [[0.0; 7]; 7];
    let mut max = 0.0f64;
    for (i, row) in k.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (y, x) = (i as f64 - 3.0, j as f64 - 3.0);
            *v = (-(x * x + y * y) / (2.0 * sigma * sigma)).exp();
            max = max.max(*v);
        }
    }
    let mut sum = 0.0;
    for v in k.iter_mut().flatten() {
        if *v < f64::EPSILON * max {
            *v = 0.0;
        }
        sum += *v;
    }
    for v in k.iter_mut().flatten() {
        *v /= sum;
    }
    k
}

/// Dependency- and importance-weighted F-measure.
///
/// Background errors are replaced by the error at the nearest foreground
/// pixel; when several foreground pixels are equally near, their errors are
/// averaged.
pub fn weighted_f_measure(pred: Plane<'_>, gt: Plane<'_>) -> Result<f64> {
    let mask = check_pair(pred, gt)?;
    let (h, w) = (pred.height, pred.width);
    let n_fg = mask.iter().filter(|&&m| m).count();
    if n_fg == 0 {
        return Ok(0.0);
    }
    let err: Vec<f64> = pred
        .data
        .iter()
        .zip(&mask)
        .map(|(&p, &g)| (p - if g { 1.0 } else { 0.0 }).abs())
        .collect();
    let nearest = nearest_foreground(&mask, h, w);
    let err_t: Vec<f64> = nearest
        .iter()
        .enumerate()
        .map(|(i, (_, src))| {
            if mask[i] {
                err[i]
            } else {
                src.iter().map(|&s| err[s]).sum::<f64>() / src.len() as f64
            }
        })
        .collect();

    let kernel = gaussian_kernel();
    let mut smoothed = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (ki, krow) in kernel.iter().enumerate() {
                let rr = r as i64 + ki as i64 - 3;
                if rr < 0 || rr >= h as i64 {
                    continue;
                }
                for (kj, kv) in krow.iter().enumerate() {
                    let cc = c as i64 + kj as i64 - 3;
                    if cc < 0 || cc >= w as i64 {
                        continue;
                    }
                    acc += kv * err_t[rr as usize * w + cc as usize];
                }
            }
            smoothed[r * w + c] = acc;
        }
    }

    let decay = 0.5f64.ln() / 5.0;
    let (mut fg_weighted, mut bg_weighted) = (0.0, 0.0);
    for i in 0..h * w {
        if mask[i] {
            let e = if smoothed[i] < err[i] { smoothed[i] } else { err[i] };
            fg_weighted += e;
        } else {
            let dist = (nearest[i].0 as f64).sqrt();
            bg_weighted += err[i] * (2.0 - (decay * dist).exp());
        }
    }
    let tp = n_fg as f64 - fg_weighted;
    let recall = 1.0 - fg_weighted / n_fg as f64;
    let denom = tp + bg_weighted;
    let precision = tp / if denom == 0.0 { EPS } else { denom };
    let num = (1.0 + BETA2) * recall * precision;
    let denom = recall + BETA2 * precision;
    Ok(num / if denom == 0.0 { EPS } else { denom })
}
