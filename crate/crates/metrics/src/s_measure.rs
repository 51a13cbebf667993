//! Structure measure: `S = 0.5 * S_object + 0.5 * S_region`.

use crate::plane::check_pair;
use crate::{Plane, Result};

const ALPHA: f64 = 0.5;

pub fn s_measure(pred: Plane<'_>, gt: Plane<'_>) -> Result<f64> {
    let mask = check_pair(pred, gt)?;
    let n = mask.len();
    let n_fg = mask.iter().filter(|&&m| m).count();
    let mean_pred = pred.data.iter().sum::<f64>() / n as f64;
    if n_fg == 0 {
        return Ok(1.0 - mean_pred);
    }
    if n_fg == n {
        return Ok(mean_pred);
    }
    let score = ALPHA * object_score(pred, &mask, n_fg) + (1.0 - ALPHA) * region_score(pred, &mask);
    Ok(score.max(0.0))
}

fn object_score(pred: Plane<'_>, mask: &[bool], n_fg: usize) -> f64 {
    let u = n_fg as f64 / mask.len() as f64;
    let fg: Vec<f64> = pred.data.iter().zip(mask).filter(|(_, &m)| m).map(|(&p, _)| p).collect();
    let bg: Vec<f64> = pred.data.iter().zip(mask).filter(|(_, &m)| !m).map(|(&p, _)| 1.0 - p).collect();
    u * similarity(&fg) + (1.0 - u) * similarity(&bg)
}

fn similarity(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    // sample std (ddof = 1); a single value has none
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    2.0 * mean / (mean * mean + 1.0 + std)
}

fn region_score(pred: Plane<'_>, mask: &[bool]) -> f64 {
    let (h, w) = (pred.height, pred.width);
    let (cx, cy) = centroid(mask, h, w);
    let area = (h * w) as f64;
    let quadrants = [
        (0..cy, 0..cx),
        (0..cy, cx..w),
        (cy..h, 0..cx),
        (cy..h, cx..w),
    ];
    // Σ w_i s_i written as 1 - Σ w_i (1 - s_i); the weights sum to one.
    let mut deficit = 0.0;
    for (rows, cols) in quadrants {
        let weight = (rows.len() * cols.len()) as f64 / area;
        if weight == 0.0 {
            continue;
        }
        let mut p = Vec::with_capacity(rows.len() * cols.len());
        let mut g = Vec::with_capacity(p.capacity());
        for r in rows {
            for c in cols.clone() {
                p.push(pred.at(r, c));
                g.push(if mask[r * w + c] { 1.0 } else { 0.0 });
            }
        }
        deficit += weight * (1.0 - ssim(&p, &g));
    }
    1.0 - deficit
}

/// Split point `(x, y)`: rounded foreground centroid plus one.
fn centroid(mask: &[bool], h: usize, w: usize) -> (usize, usize) {
    let (mut sr, mut sc, mut n) = (0.0, 0.0, 0usize);
    for r in 0..h {
        for c in 0..w {
            if mask[r * w + c] {
                sr += r as f64;
                sc += c as f64;
                n += 1;
            }
        }
    }
    if n == 0 {
        return ((w as f64 / 2.0).round_ties_even() as usize, (h as f64 / 2.0).round_ties_even() as usize);
    }
    let x = (sc / n as f64).round_ties_even() as usize + 1;
    let y = (sr / n as f64).round_ties_even() as usize + 1;
    (x, y)
}

fn ssim(pred: &[f64], gt: &[f64]) -> f64 {
    let n = pred.len();
    let nf = n as f64;
    let x = pred.iter().sum::<f64>() / nf;
    let y = gt.iter().sum::<f64>() / nf;
    let (mut sx, mut sy, mut sxy) = (0.0, 0.0, 0.0);
    if n > 1 {
        for (p, g) in pred.iter().zip(gt) {
            sx += (p - x) * (p - x);
            sy += (g - y) * (g - y);
            sxy += (p - x) * (g - y);
        }
        sx /= nf - 1.0;
        sy /= nf - 1.0;
        sxy /= nf - 1.0;
    }
    let alpha = 4.0 * x * y * sxy;
    let beta = (x * x + y * y) * (sx + sy);
    if alpha != 0.0 {
        alpha / beta
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}
