//! Brute-force reference transcriptions of the evaluation measures.
//!
//! Written directly from the published formulas, pixel by pixel and
//! threshold by threshold, with no shared code with the library.
#![allow(dead_code)]

pub const BETA2: f64 = 0.3;

pub struct Reference {
    pub s: f64,
    pub f_w: f64,
    pub f_m: f64,
    pub f_mx: f64,
    pub e_m: f64,
    pub e_x: f64,
    pub mae: f64,
}

pub fn reference(pred: &[f64], gt: &[f64], h: usize, w: usize) -> Reference {
    let (e_m, e_x) = e_measure(pred, gt);
    Reference {
        s: s_measure(pred, gt, h, w),
        f_w: weighted_f(pred, gt, h, w),
        f_m: adaptive_f(pred, gt),
        f_mx: max_f(pred, gt),
        e_m,
        e_x,
        mae: pred.iter().zip(gt).map(|(p, g)| (p - g).abs()).sum::<f64>() / pred.len() as f64,
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

// ---------------------------------------------------------------- S-measure

pub fn s_measure(pred: &[f64], gt: &[f64], h: usize, w: usize) -> f64 {
    let y = mean(gt);
    if y == 0.0 {
        return 1.0 - mean(pred);
    }
    if y == 1.0 {
        return mean(pred);
    }
    let sm = 0.5 * s_object_total(pred, gt) + 0.5 * s_region(pred, gt, h, w);
    if sm < 0.0 {
        0.0
    } else {
        sm
    }
}

fn s_object(values: &[f64]) -> f64 {
    let x = mean(values);
    let sigma = if values.len() < 2 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - x) * (v - x)).sum::<f64>() / (values.len() - 1) as f64;
        var.sqrt()
    };
    2.0 * x / (x * x + 1.0 + sigma)
}

fn s_object_total(pred: &[f64], gt: &[f64]) -> f64 {
    let mut fg = Vec::new();
    let mut bg = Vec::new();
    for i in 0..pred.len() {
        if gt[i] == 1.0 {
            fg.push(pred[i] * gt[i]);
        } else {
            bg.push((1.0 - pred[i]) * (1.0 - gt[i]));
        }
    }
    let u = mean(gt);
    u * s_object(&fg) + (1.0 - u) * s_object(&bg)
}

fn s_region(pred: &[f64], gt: &[f64], h: usize, w: usize) -> f64 {
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if gt[r * w + c] == 1.0 {
                rows.push(r as f64);
                cols.push(c as f64);
            }
        }
    }
    let x = mean(&cols).round_ties_even() as usize + 1;
    let y = mean(&rows).round_ties_even() as usize + 1;
    let area = (h * w) as f64;
    let w1 = (x * y) as f64 / area;
    let w2 = (y * (w - x)) as f64 / area;
    let w3 = ((h - y) * x) as f64 / area;
    let w4 = 1.0 - w1 - w2 - w3;
    let block = |r0: usize, r1: usize, c0: usize, c1: usize| {
        let mut p = Vec::new();
        let mut g = Vec::new();
        for r in r0..r1 {
            for c in c0..c1 {
                p.push(pred[r * w + c]);
                g.push(gt[r * w + c]);
            }
        }
        (p, g)
    };
    let parts = [block(0, y, 0, x), block(0, y, x, w), block(y, h, 0, x), block(y, h, x, w)];
    let weights = [w1, w2, w3, w4];
    let mut total = 0.0;
    for (k, (p, g)) in parts.iter().enumerate() {
        if p.is_empty() {
            continue;
        }
        total += weights[k] * ssim(p, g);
    }
    total
}

fn ssim(p: &[f64], g: &[f64]) -> f64 {
    let n = p.len() as f64;
    let x = mean(p);
    let y = mean(g);
    let (sx, sy, sxy) = if p.len() < 2 {
        (0.0, 0.0, 0.0)
    } else {
        let mut a = 0.0;
        let mut b = 0.0;
        let mut c = 0.0;
        for i in 0..p.len() {
            a += (p[i] - x).powi(2);
            b += (g[i] - y).powi(2);
            c += (p[i] - x) * (g[i] - y);
        }
        (a / (n - 1.0), b / (n - 1.0), c / (n - 1.0))
    };
    let alpha = 4.0 * x * y * sxy;
    let beta = (x * x + y * y) * (sx + sy);
    if alpha != 0.0 {
        alpha / (beta + f64::EPSILON)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

// ---------------------------------------------------------------- F-measure

fn f_from_pr(p: f64, r: f64) -> f64 {
    if p * r == 0.0 {
        0.0
    } else {
        (1.0 + BETA2) * p * r / (BETA2 * p + r)
    }
}

pub fn adaptive_f(pred: &[f64], gt: &[f64]) -> f64 {
    let t = (2.0 * mean(pred)).min(1.0);
    let bin: Vec<bool> = pred.iter().map(|&p| p >= t).collect();
    let inter = (0..pred.len()).filter(|&i| bin[i] && gt[i] == 1.0).count();
    if inter == 0 {
        return 0.0;
    }
    let p = inter as f64 / bin.iter().filter(|&&b| b).count() as f64;
    let r = inter as f64 / gt.iter().filter(|&&g| g == 1.0).count() as f64;
    f_from_pr(p, r)
}

pub fn max_f(pred: &[f64], gt: &[f64]) -> f64 {
    let n_gt = gt.iter().filter(|&&g| g == 1.0).count();
    let mut best = 0.0f64;
    for i in 0..256 {
        let t = i as f64 / 255.0;
        let mut tp = 0;
        let mut pos = 0;
        for k in 0..pred.len() {
            if pred[k] >= t {
                pos += 1;
                if gt[k] == 1.0 {
                    tp += 1;
                }
            }
        }
        let p = if pos == 0 { 0.0 } else { tp as f64 / pos as f64 };
        let r = if n_gt == 0 { 0.0 } else { tp as f64 / n_gt as f64 };
        best = best.max(f_from_pr(p, r));
    }
    best
}

pub fn weighted_f(pred: &[f64], gt: &[f64], h: usize, w: usize) -> f64 {
    let fg: Vec<usize> = (0..h * w).filter(|&i| gt[i] == 1.0).collect();
    if fg.is_empty() {
        return 0.0;
    }
    let e: Vec<f64> = (0..h * w).map(|i| (pred[i] - gt[i]).abs()).collect();
    let mut et = e.clone();
    let mut dist = vec![0.0; h * w];
    for i in 0..h * w {
        if gt[i] == 1.0 {
            continue;
        }
        let (r, c) = ((i / w) as i64, (i % w) as i64);
        let mut best = i64::MAX;
        let mut acc = Vec::new();
        for &j in &fg {
            let (rr, cc) = ((j / w) as i64, (j % w) as i64);
            let d = (r - rr) * (r - rr) + (c - cc) * (c - cc);
            if d < best {
                best = d;
                acc.clear();
            }
            if d == best {
                acc.push(e[j]);
            }
        }
        et[i] = mean(&acc);
        dist[i] = (best as f64).sqrt();
    }
    // fspecial('gaussian', 7, 5)
    let mut k = [[0.0f64; 7]; 7];
    let mut ksum = 0.0;
    for a in 0..7 {
        for b in 0..7 {
            let (y, x) = (a as f64 - 3.0, b as f64 - 3.0);
            k[a][b] = (-(x * x + y * y) / 50.0).exp();
            ksum += k[a][b];
        }
    }
    let mut ea = vec![0.0; h * w];
    for r in 0..h as i64 {
        for c in 0..w as i64 {
            let mut s = 0.0;
            for a in -3i64..=3 {
                for b in -3i64..=3 {
                    let (rr, cc) = (r + a, c + b);
                    if rr >= 0 && cc >= 0 && rr < h as i64 && cc < w as i64 {
                        s += k[(a + 3) as usize][(b + 3) as usize] / ksum * et[(rr * w as i64 + cc) as usize];
                    }
                }
            }
            ea[(r * w as i64 + c) as usize] = s;
        }
    }
    let mut ew = vec![0.0; h * w];
    for i in 0..h * w {
        let m = if gt[i] == 1.0 && ea[i] < e[i] { ea[i] } else { e[i] };
        let b = if gt[i] == 0.0 { 2.0 - (0.5f64.ln() / 5.0 * dist[i]).exp() } else { 1.0 };
        ew[i] = m * b;
    }
    let n_fg = fg.len() as f64;
    let tpw = n_fg - fg.iter().map(|&i| ew[i]).sum::<f64>();
    let fpw: f64 = (0..h * w).filter(|&i| gt[i] == 0.0).map(|i| ew[i]).sum();
    let r = 1.0 - fg.iter().map(|&i| ew[i]).sum::<f64>() / n_fg;
    let p = if tpw + fpw == 0.0 { 0.0 } else { tpw / (tpw + fpw) };
    if r + BETA2 * p == 0.0 {
        0.0
    } else {
        (1.0 + BETA2) * r * p / (r + BETA2 * p)
    }
}

// ---------------------------------------------------------------- E-measure

pub fn e_measure(pred: &[f64], gt: &[f64]) -> (f64, f64) {
    let n = pred.len() as f64;
    let gt_sum: f64 = gt.iter().sum();
    let mut scores = Vec::with_capacity(256);
    for i in 0..256 {
        let t = (i + 1) as f64 / 256.0;
        let bin: Vec<f64> = pred.iter().map(|&p| if p >= t { 1.0 } else { 0.0 }).collect();
        let total: f64 = if gt_sum == 0.0 {
            bin.iter().map(|b| 1.0 - b).sum()
        } else if gt_sum == n {
            bin.iter().sum()
        } else {
            let mp = mean(&bin);
            let mg = mean(gt);
            (0..pred.len())
                .map(|k| {
                    let a = bin[k] - mp;
                    let b = gt[k] - mg;
                    let den = a * a + b * b;
                    let align = if den == 0.0 { 0.0 } else { 2.0 * a * b / den };
                    (align + 1.0).powi(2) / 4.0
                })
                .sum()
        };
        scores.push(total / n);
    }
    (mean(&scores), scores.iter().cloned().fold(f64::MIN, f64::max))
}
