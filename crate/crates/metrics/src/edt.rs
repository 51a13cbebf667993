//! Exact Euclidean distance to the nearest foreground pixel, with every
//! equidistant nearest foreground pixel reported.

const INF: f64 = 1e20;

/// For every pixel, the squared distance to the closest `true` pixel of
/// `mask` and the flat indices of *all* `true` pixels at that distance.
///
/// Foreground pixels map to `(0, [self])`. If the mask has no foreground the
/// distance is `u64::MAX` and the source list is empty.
pub fn nearest_foreground(mask: &[bool], height: usize, width: usize) -> Vec<(u64, Vec<usize>)> {
    assert_eq!(mask.len(), height * width);
    let dist2 = squared_edt(mask, height, width);
    let mut out = Vec::with_capacity(mask.len());
    for r in 0..height {
        for c in 0..width {
            let idx = r * width + c;
            if mask[idx] {
                out.push((0, vec![idx]));
                continue;
            }
            let d = dist2[idx];
            if d >= INF {
                out.push((u64::MAX, Vec::new()));
                continue;
            }
            let d2 = d as i64;
            out.push((d2 as u64, circle_sources(mask, height, width, r as i64, c as i64, d2)));
        }
    }
    out
}

/// Foreground pixels lying exactly `sqrt(d2)` away from `(r, c)`.
fn circle_sources(mask: &[bool], h: usize, w: usize, r: i64, c: i64, d2: i64) -> Vec<usize> {
    let radius = isqrt(d2);
    let mut sources = Vec::new();
    for dy in -radius..=radius {
        let rem = d2 - dy * dy;
        let dx = isqrt(rem);
        if dx * dx != rem {
            continue;
        }
        let offsets: &[i64] = if dx == 0 { &[0] } else { &[-dx, dx] };
        for &ox in offsets {
            let (rr, cc) = (r + dy, c + ox);
            if rr < 0 || cc < 0 || rr >= h as i64 || cc >= w as i64 {
                continue;
            }
            let idx = rr as usize * w + cc as usize;
            if mask[idx] {
                sources.push(idx);
            }
        }
    }
    sources.sort_unstable();
    sources
}

fn isqrt(v: i64) -> i64 {
    if v <= 0 {
        return 0;
    }
    let mut s = (v as f64).sqrt() as i64;
    while s * s > v {
        s -= 1;
    }
    while (s + 1) * (s + 1) <= v {
        s += 1;
    }
    s
}

/// Two-pass lower-envelope transform (separable in rows and columns).
fn squared_edt(mask: &[bool], h: usize, w: usize) -> Vec<f64> {
    let mut grid: Vec<f64> = mask.iter().map(|&m| if m { 0.0 } else { INF }).collect();
    let mut f = vec![0.0; h.max(w)];
    let mut d = vec![0.0; h.max(w)];
    for c in 0..w {
        for r in 0..h {
            f[r] = grid[r * w + c];
        }
        envelope_1d(&f[..h], &mut d[..h]);
        for r in 0..h {
            grid[r * w + c] = d[r];
        }
    }
    for r in 0..h {
        f[..w].copy_from_slice(&grid[r * w..(r + 1) * w]);
        envelope_1d(&f[..w], &mut d[..w]);
        grid[r * w..(r + 1) * w].copy_from_slice(&d[..w]);
    }
    grid
}

fn envelope_1d(f: &[f64], d: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    z[0] = -INF;
    z[1] = INF;
    let intersect = |q: usize, p: usize| {
        let (qf, pf) = (q as f64, p as f64);
        ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * qf - 2.0 * pf)
    };
    for q in 1..n {
        // z[0] = -INF bounds the walk-back (s is always finite)
        let mut s = intersect(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = intersect(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = INF;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let diff = q as f64 - v[k] as f64;
        *out = diff * diff + f[v[k]];
    }
}
