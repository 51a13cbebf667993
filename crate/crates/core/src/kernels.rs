//! Raw numeric kernels on flat `[C, H, W]` buffers, shared by the autodiff
//! graph and the data pipeline.

/// `c = a · b + beta · c` with optional transposes, all row-major.
///
/// `a` is `m×k` (or `k×m` when `ta`), `b` is `k×n` (or `n×k` when `tb`).
#[allow(clippy::too_many_arguments)]
pub fn gemm(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool, beta: f64, c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices cover exactly the m×k, k×n and m×n extents described
    // by the strides above (checked by the debug assertions).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Square-kernel 2-D convolution geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl ConvGeom {
    pub const fn new(kernel: usize, stride: usize, padding: usize, dilation: usize) -> Self {
        Self { kernel, stride, padding, dilation }
    }

    /// Pointwise 1×1.
    pub const fn pointwise() -> Self {
        Self::new(1, 1, 0, 1)
    }

    /// Size-preserving `k×k` with the given dilation.
    pub const fn same(kernel: usize, dilation: usize) -> Self {
        Self::new(kernel, 1, dilation * (kernel - 1) / 2, dilation)
    }

    /// Non-overlapping `k×k` patches with stride `k`.
    pub const fn patch(kernel: usize) -> Self {
        Self::new(kernel, kernel, 0, 1)
    }

    pub fn output_size(&self, n: usize) -> Option<usize> {
        let span = self.dilation * (self.kernel - 1) + 1;
        let padded = n + 2 * self.padding;
        if padded < span {
            return None;
        }
        Some((padded - span) / self.stride + 1)
    }

    fn is_identity_layout(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }
}

/// Unfolds `[C, H, W]` into `[C·k·k, OH·OW]`.
pub fn im2col(x: &[f64], c: usize, h: usize, w: usize, g: ConvGeom, oh: usize, ow: usize) -> Vec<f64> {
    if g.is_identity_layout() {
        return x.to_vec();
    }
    let k = g.kernel;
    let mut cols = vec![0.0; c * k * k * oh * ow];
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky * g.dilation) as isize - g.padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &x[(ci * h + iy as usize) * w..(ci * h + iy as usize + 1) * w];
                    for ox in 0..ow {
                        let ix = (ox * g.stride + kx * g.dilation) as isize - g.padding as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[oy * ow + ox] = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: folds `[C·k·k, OH·OW]` back into `[C, H, W]`, summing overlaps.
pub fn col2im(cols: &[f64], c: usize, h: usize, w: usize, g: ConvGeom, oh: usize, ow: usize) -> Vec<f64> {
    if g.is_identity_layout() {
        return cols.to_vec();
    }
    let k = g.kernel;
    let mut x = vec![0.0; c * h * w];
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky * g.dilation) as isize - g.padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let base = (ci * h + iy as usize) * w;
                    for ox in 0..ow {
                        let ix = (ox * g.stride + kx * g.dilation) as isize - g.padding as isize;
                        if ix >= 0 && ix < w as isize {
                            x[base + ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

/// One bilinear tap pair along an axis: `out = w0 * in[i0] + w1 * in[i1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tap {
    pub i0: usize,
    pub i1: usize,
    pub w0: f64,
    pub w1: f64,
}

/// Half-pixel-centre bilinear taps (`align_corners = false`), source
/// coordinates below zero clamped to zero.
pub fn bilinear_taps(n_in: usize, n_out: usize) -> Vec<Tap> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n_in - 1);
            let i1 = (i0 + 1).min(n_in - 1);
            let w1 = src - i0 as f64;
            Tap { i0, i1, w0: 1.0 - w1, w1 }
        })
        .collect()
}

pub fn resize_bilinear(x: &[f64], c: usize, h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    if (h, w) == (oh, ow) {
        return x.to_vec();
    }
    let ty = bilinear_taps(h, oh);
    let tx = bilinear_taps(w, ow);
    let mut out = vec![0.0; c * oh * ow];
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for (oy, a) in ty.iter().enumerate() {
            let (r0, r1) = (&plane[a.i0 * w..(a.i0 + 1) * w], &plane[a.i1 * w..(a.i1 + 1) * w]);
            let dst = &mut out[(ci * oh + oy) * ow..(ci * oh + oy + 1) * ow];
            for (d, b) in dst.iter_mut().zip(&tx) {
                *d = a.w0 * (b.w0 * r0[b.i0] + b.w1 * r0[b.i1]) + a.w1 * (b.w0 * r1[b.i0] + b.w1 * r1[b.i1]);
            }
        }
    }
    out
}

/// Adjoint of [`resize_bilinear`].
pub fn resize_bilinear_backward(g: &[f64], c: usize, h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    if (h, w) == (oh, ow) {
        return g.to_vec();
    }
    let ty = bilinear_taps(h, oh);
    let tx = bilinear_taps(w, ow);
    let mut dx = vec![0.0; c * h * w];
    for ci in 0..c {
        let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
        for (oy, a) in ty.iter().enumerate() {
            for (ox, b) in tx.iter().enumerate() {
                let v = g[(ci * oh + oy) * ow + ox];
                plane[a.i0 * w + b.i0] += a.w0 * b.w0 * v;
                plane[a.i0 * w + b.i1] += a.w0 * b.w1 * v;
                plane[a.i1 * w + b.i0] += a.w1 * b.w0 * v;
                plane[a.i1 * w + b.i1] += a.w1 * b.w1 * v;
            }
        }
    }
    dx
}

/// Nearest-neighbour resize (`floor(o * in / out)` source index).
pub fn resize_nearest(x: &[f64], c: usize, h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(c * oh * ow);
    for ci in 0..c {
        for oy in 0..oh {
            let iy = (oy * h / oh).min(h - 1);
            for ox in 0..ow {
                let ix = (ox * w / ow).min(w - 1);
                out.push(x[(ci * h + iy) * w + ix]);
            }
        }
    }
    out
}

/// Single-level orthonormal 2-D Haar analysis of `[C, H, W]` (even H, W).
///
/// Output is `[4C, H/2, W/2]` laid out as LL, LH, HL, HH channel groups. For a
/// block `[[a, b], [c, d]]`: `LL = (a+b+c+d)/2`, `LH = (a+b-c-d)/2`,
/// `HL = (a-b+c-d)/2`, `HH = (a-b-c+d)/2`.
pub fn haar_analysis(x: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let band = c * oh * ow;
    let mut out = vec![0.0; 4 * band];
    for ci in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                let a = x[(ci * h + 2 * y) * w + 2 * xx];
                let b = x[(ci * h + 2 * y) * w + 2 * xx + 1];
                let cc = x[(ci * h + 2 * y + 1) * w + 2 * xx];
                let d = x[(ci * h + 2 * y + 1) * w + 2 * xx + 1];
                let o = (ci * oh + y) * ow + xx;
                out[o] = (a + b + cc + d) / 2.0;
                out[band + o] = (a + b - cc - d) / 2.0;
                out[2 * band + o] = (a - b + cc - d) / 2.0;
                out[3 * band + o] = (a - b - cc + d) / 2.0;
            }
        }
    }
    out
}

/// Inverse of [`haar_analysis`]; also its adjoint (the transform is orthonormal).
pub fn haar_synthesis(bands: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let band = c * oh * ow;
    let mut x = vec![0.0; c * h * w];
    for ci in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                let o = (ci * oh + y) * ow + xx;
                let (ll, lh, hl, hh) = (bands[o], bands[band + o], bands[2 * band + o], bands[3 * band + o]);
                x[(ci * h + 2 * y) * w + 2 * xx] = (ll + lh + hl + hh) / 2.0;
                x[(ci * h + 2 * y) * w + 2 * xx + 1] = (ll + lh - hl - hh) / 2.0;
                x[(ci * h + 2 * y + 1) * w + 2 * xx] = (ll - lh + hl - hh) / 2.0;
                x[(ci * h + 2 * y + 1) * w + 2 * xx + 1] = (ll - lh - hl + hh) / 2.0;
            }
        }
    }
    x
}

/// Sum over the `(2r+1)²` window clipped to the map, per channel.
pub fn box_sum(x: &[f64], c: usize, h: usize, w: usize, r: usize) -> Vec<f64> {
    let mut rows = vec![0.0; c * h * w];
    for ci in 0..c {
        for y in 0..h {
            let src = &x[(ci * h + y) * w..(ci * h + y + 1) * w];
            let dst = &mut rows[(ci * h + y) * w..(ci * h + y + 1) * w];
            for (xx, d) in dst.iter_mut().enumerate() {
                let lo = xx.saturating_sub(r);
                let hi = (xx + r).min(w - 1);
                *d = src[lo..=hi].iter().sum();
            }
        }
    }
    let mut out = vec![0.0; c * h * w];
    for ci in 0..c {
        for y in 0..h {
            let lo = y.saturating_sub(r);
            let hi = (y + r).min(h - 1);
            let dst_off = (ci * h + y) * w;
            for yy in lo..=hi {
                let src_off = (ci * h + yy) * w;
                for xx in 0..w {
                    out[dst_off + xx] += rows[src_off + xx];
                }
            }
        }
    }
    out
}

/// Number of in-bounds pixels of each clipped window (same for every channel).
pub fn box_counts(h: usize, w: usize, r: usize) -> Vec<f64> {
    let span = |i: usize, n: usize| ((i + r).min(n - 1) - i.saturating_sub(r) + 1) as f64;
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for xx in 0..w {
            out.push(span(y, h) * span(xx, w));
        }
    }
    out
}

/// Window mean, accumulated as deviations from the centre pixel so that any
/// window lying inside a constant region returns that constant exactly.
pub fn box_mean(x: &[f64], c: usize, h: usize, w: usize, r: usize) -> Vec<f64> {
    let mut out = vec![0.0; c * h * w];
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for y in 0..h {
            let (y0, y1) = (y.saturating_sub(r), (y + r).min(h - 1));
            for xx in 0..w {
                let (x0, x1) = (xx.saturating_sub(r), (xx + r).min(w - 1));
                let centre = plane[y * w + xx];
                let mut dev = 0.0;
                for yy in y0..=y1 {
                    for v in &plane[yy * w + x0..=yy * w + x1] {
                        dev += v - centre;
                    }
                }
                let n = ((y1 - y0 + 1) * (x1 - x0 + 1)) as f64;
                out[(ci * h + y) * w + xx] = centre + dev / n;
            }
        }
    }
    out
}

/// Adjoint of [`box_mean`] (the window relation is symmetric).
pub fn box_mean_backward(g: &[f64], c: usize, h: usize, w: usize, r: usize) -> Vec<f64> {
    let counts = box_counts(h, w, r);
    let scaled: Vec<f64> = g.iter().enumerate().map(|(i, v)| v / counts[i % (h * w)]).collect();
    box_sum(&scaled, c, h, w, r)
}

/// `[start, end)` source range of adaptive pooling bin `i` of `n_out`.
pub fn pool_range(i: usize, n_in: usize, n_out: usize) -> (usize, usize) {
    let start = i * n_in / n_out;
    let end = ((i + 1) * n_in).div_ceil(n_out);
    (start, end)
}

pub fn adaptive_avg_pool(x: &[f64], c: usize, h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    let mut out = vec![0.0; c * oh * ow];
    for ci in 0..c {
        for oy in 0..oh {
            let (y0, y1) = pool_range(oy, h, oh);
            for ox in 0..ow {
                let (x0, x1) = pool_range(ox, w, ow);
                let mut s = 0.0;
                for y in y0..y1 {
                    for xx in x0..x1 {
                        s += x[(ci * h + y) * w + xx];
                    }
                }
                out[(ci * oh + oy) * ow + ox] = s / ((y1 - y0) * (x1 - x0)) as f64;
            }
        }
    }
    out
}

pub fn adaptive_avg_pool_backward(g: &[f64], c: usize, h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    let mut dx = vec![0.0; c * h * w];
    for ci in 0..c {
        for oy in 0..oh {
            let (y0, y1) = pool_range(oy, h, oh);
            for ox in 0..ow {
                let (x0, x1) = pool_range(ox, w, ow);
                let v = g[(ci * oh + oy) * ow + ox] / ((y1 - y0) * (x1 - x0)) as f64;
                for y in y0..y1 {
                    for xx in x0..x1 {
                        dx[(ci * h + y) * w + xx] += v;
                    }
                }
            }
        }
    }
    dx
}
