//! Tape-based reverse-mode autodiff over [`Tensor`]s.
//!
//! A [`Graph`] records every op eagerly (values are computed on the spot) and
//! [`Graph::backward`] walks the tape in reverse. Parameters enter through
//! [`Graph::param`]; frozen parameters, inputs and anything in inference mode
//! do not require gradients, so no adjoint is ever computed for them.

use std::collections::HashMap;

use crate::kernels::{self, ConvGeom};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Gelu(Var),
    Softplus(Var),
    Log(Var),
    Conv { x: Var, w: Var, b: Option<Var>, geom: ConvGeom },
    Resize(Var),
    Haar(Var),
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    BoxMean { x: Var, radius: usize },
    AdaptivePool(Var),
    BroadcastSpatial(Var),
    AddRowBias(Var, Var),
    AddChannelBias(Var, Var),
    Sum(Var),
    Mean(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    inference: bool,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

fn softmax_rows(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = x.to_vec();
    for r in 0..rows {
        let row = &mut out[r * cols..(r + 1) * cols];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    out
}

fn log_softmax_rows(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = x.to_vec();
    for r in 0..rows {
        let row = &mut out[r * cols..(r + 1) * cols];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|v| *v -= lse);
    }
    out
}

fn transpose(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = x[r * cols + c];
        }
    }
    out
}

fn conv_dims(x: &Tensor, w: &Tensor, geom: ConvGeom) -> (usize, usize, usize, usize, usize, usize) {
    let (cin, h, wd) = x.dims3().expect("conv input must be [C,H,W]");
    let cout = w.shape()[0];
    assert_eq!(
        w.shape(),
        &[cout, cin, geom.kernel, geom.kernel],
        "conv weight {:?} does not match input channels {cin}",
        w.shape()
    );
    let oh = geom.output_size(h).expect("conv kernel larger than input");
    let ow = geom.output_size(wd).expect("conv kernel larger than input");
    (cin, h, wd, cout, oh, ow)
}

impl<'p> Graph<'p> {
    /// Training graph: trainable parameters require gradients.
    pub fn new(store: &'p ParamStore) -> Self {
        Self { store, nodes: Vec::new(), params: HashMap::new(), inference: false }
    }

    /// Inference graph: nothing requires gradients.
    pub fn inference(store: &'p ParamStore) -> Self {
        Self { inference: true, ..Self::new(store) }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, deps: &[Var]) -> Var {
        let requires_grad = !self.inference && deps.iter().any(|d| self.nodes[d.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// Constant input (no gradient).
    pub fn input(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// Free leaf that requires a gradient (used to differentiate w.r.t. inputs).
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: !self.inference });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let p = self.store.get(id);
        let requires_grad = !self.inference && !p.group().frozen();
        self.nodes.push(Node { value: p.value().clone(), op: Op::Leaf, requires_grad });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(id, v);
        v
    }

    pub fn detach(&mut self, x: Var) -> Var {
        let value = self.value(x).clone();
        self.input(value)
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "elementwise shape mismatch");
        let out = va.zip_map(vb, f);
        self.push(out, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x / y, Op::Div(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|x| x * k);
        self.push(out, Op::Scale(a, k), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|x| x + k);
        self.push(out, Op::AddScalar(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a), &[a])
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(gelu);
        self.push(out, Op::Gelu(a), &[a])
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.value(a).map(softplus);
        self.push(out, Op::Softplus(a), &[a])
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::ln);
        self.push(out, Op::Log(a), &[a])
    }

    /// 2-D convolution of `[Cin, H, W]` by `[Cout, Cin, k, k]` with optional bias `[Cout]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, geom: ConvGeom) -> Var {
        let (xv, wv) = (self.value(x), self.value(w));
        let (cin, h, wd, cout, oh, ow) = conv_dims(xv, wv, geom);
        let kk = cin * geom.kernel * geom.kernel;
        let cols = kernels::im2col(xv.data(), cin, h, wd, geom, oh, ow);
        let mut out = vec![0.0; cout * oh * ow];
        if let Some(b) = b {
            let bv = self.value(b).data();
            assert_eq!(bv.len(), cout, "conv bias length");
            for (c, chunk) in out.chunks_mut(oh * ow).enumerate() {
                chunk.fill(bv[c]);
            }
        }
        kernels::gemm(cout, kk, oh * ow, wv.data(), false, &cols, false, 1.0, &mut out);
        let value = Tensor::new(vec![cout, oh, ow], out).expect("conv output");
        let deps: Vec<Var> = [Some(x), Some(w), b].into_iter().flatten().collect();
        self.push(value, Op::Conv { x, w, b, geom }, &deps)
    }

    /// Bilinear resize of `[C, H, W]` to `[C, oh, ow]` (half-pixel centres).
    pub fn resize(&mut self, x: Var, oh: usize, ow: usize) -> Var {
        let (c, h, w) = self.value(x).dims3().expect("resize input must be [C,H,W]");
        if (h, w) == (oh, ow) {
            return x;
        }
        let out = kernels::resize_bilinear(self.value(x).data(), c, h, w, oh, ow);
        self.push(Tensor::new(vec![c, oh, ow], out).unwrap(), Op::Resize(x), &[x])
    }

    /// Haar analysis: `[C, H, W]` → `[4C, H/2, W/2]` as LL, LH, HL, HH groups.
    pub fn haar(&mut self, x: Var) -> Var {
        let (c, h, w) = self.value(x).dims3().expect("haar input must be [C,H,W]");
        assert!(h % 2 == 0 && w % 2 == 0, "haar needs even spatial size");
        let out = kernels::haar_analysis(self.value(x).data(), c, h, w);
        self.push(Tensor::new(vec![4 * c, h / 2, w / 2], out).unwrap(), Op::Haar(x), &[x])
    }

    /// Concatenation along the leading axis.
    pub fn concat(&mut self, xs: &[Var]) -> Var {
        let tail = self.shape(xs[0])[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        for &x in xs {
            let v = self.value(x);
            assert_eq!(&v.shape()[1..], &tail[..], "concat trailing shape mismatch");
            lead += v.shape()[0];
            data.extend_from_slice(v.data());
        }
        let mut shape = vec![lead];
        shape.extend_from_slice(&tail);
        self.push(Tensor::new(shape, data).unwrap(), Op::Concat(xs.to_vec()), xs)
    }

    /// Rows `[start, start + len)` along the leading axis.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        assert!(start + len <= self.shape(x)[0], "slice out of range");
        let out = self.value(x).channels(start, len);
        self.push(out, Op::Slice { x, start }, &[x])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.value(a).dims2().expect("matmul lhs must be 2-D");
        let (k2, n) = self.value(b).dims2().expect("matmul rhs must be 2-D");
        assert_eq!(k, k2, "matmul inner dimension mismatch");
        let mut out = vec![0.0; m * n];
        kernels::gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), false, 0.0, &mut out);
        self.push(Tensor::new(vec![m, n], out).unwrap(), Op::MatMul(a, b), &[a, b])
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let (r, c) = self.value(x).dims2().expect("transpose input must be 2-D");
        let out = transpose(self.value(x).data(), r, c);
        self.push(Tensor::new(vec![c, r], out).unwrap(), Op::Transpose(x), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let out = self.value(x).clone().reshape(shape).expect("reshape size mismatch");
        self.push(out, Op::Reshape(x), &[x])
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let (r, c) = self.value(x).dims2().expect("softmax input must be 2-D");
        let out = softmax_rows(self.value(x).data(), r, c);
        self.push(Tensor::new(vec![r, c], out).unwrap(), Op::SoftmaxRows(x), &[x])
    }

    pub fn log_softmax_rows(&mut self, x: Var) -> Var {
        let (r, c) = self.value(x).dims2().expect("log-softmax input must be 2-D");
        let out = log_softmax_rows(self.value(x).data(), r, c);
        self.push(Tensor::new(vec![r, c], out).unwrap(), Op::LogSoftmaxRows(x), &[x])
    }

    /// Mean over the clipped `(2r+1)²` window, per channel.
    pub fn box_mean(&mut self, x: Var, radius: usize) -> Var {
        let (c, h, w) = self.value(x).dims3().expect("box mean input must be [C,H,W]");
        let out = kernels::box_mean(self.value(x).data(), c, h, w, radius);
        self.push(Tensor::new(vec![c, h, w], out).unwrap(), Op::BoxMean { x, radius }, &[x])
    }

    pub fn adaptive_pool(&mut self, x: Var, oh: usize, ow: usize) -> Var {
        let (c, h, w) = self.value(x).dims3().expect("pool input must be [C,H,W]");
        let out = kernels::adaptive_avg_pool(self.value(x).data(), c, h, w, oh, ow);
        self.push(Tensor::new(vec![c, oh, ow], out).unwrap(), Op::AdaptivePool(x), &[x])
    }

    /// `C` values (any shape) → `[C, h, w]` with each channel constant.
    pub fn broadcast_spatial(&mut self, v: Var, h: usize, w: usize) -> Var {
        let src = self.value(v).data();
        let mut out = Vec::with_capacity(src.len() * h * w);
        for &x in src {
            out.extend(std::iter::repeat_n(x, h * w));
        }
        self.push(Tensor::new(vec![src.len(), h, w], out).unwrap(), Op::BroadcastSpatial(v), &[v])
    }

    /// `[N, C] + [C]` broadcast over rows.
    pub fn add_row_bias(&mut self, x: Var, b: Var) -> Var {
        let (_, c) = self.value(x).dims2().expect("row-bias input must be 2-D");
        let bv = self.value(b).data();
        assert_eq!(bv.len(), c, "row bias length");
        let mut out = self.value(x).clone();
        for row in out.data_mut().chunks_mut(c) {
            row.iter_mut().zip(bv).for_each(|(o, b)| *o += b);
        }
        self.push(out, Op::AddRowBias(x, b), &[x, b])
    }

    /// `[C, ...] + [C]` broadcast over everything after the leading axis.
    pub fn add_channel_bias(&mut self, x: Var, b: Var) -> Var {
        let c = self.shape(x)[0];
        let bv = self.value(b).data();
        assert_eq!(bv.len(), c, "channel bias length");
        let mut out = self.value(x).clone();
        let plane = out.len() / c;
        for (ch, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
            chunk.iter_mut().for_each(|o| *o += bv[ch]);
        }
        self.push(out, Op::AddChannelBias(x, b), &[x, b])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let s = self.value(x).mean();
        self.push(Tensor::scalar(s), Op::Mean(x), &[x])
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor>> = vec![None; n];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));
        }
        for i in (0..n).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop(i, &g, &mut grads);
        }
        let params = self
            .params
            .iter()
            .filter_map(|(&id, &v)| grads[v.0].take().map(|g| (id, g)))
            .collect();
        Gradients { params, leaves: grads }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn backprop(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let y = &self.nodes[i].value;
        let val = |v: Var| &self.nodes[v.0].value;
        let like = |v: Var, data: Vec<f64>| Tensor::new(val(v).shape().to_vec(), data).unwrap();
        match &self.nodes[i].op {
            Op::Leaf => {}
            &Op::Add(a, b) => {
                self.accumulate(grads, a, g.clone());
                self.accumulate(grads, b, g.clone());
            }
            &Op::Sub(a, b) => {
                self.accumulate(grads, a, g.clone());
                self.accumulate(grads, b, g.map(|x| -x));
            }
            &Op::Mul(a, b) => {
                self.accumulate(grads, a, g.zip_map(val(b), |g, y| g * y));
                self.accumulate(grads, b, g.zip_map(val(a), |g, x| g * x));
            }
            &Op::Div(a, b) => {
                let (va, vb) = (val(a), val(b));
                self.accumulate(grads, a, g.zip_map(vb, |g, y| g / y));
                let db = g.data().iter().zip(va.data()).zip(vb.data()).map(|((g, x), y)| -g * x / (y * y)).collect();
                self.accumulate(grads, b, like(b, db));
            }
            &Op::Scale(a, k) => self.accumulate(grads, a, g.map(|x| x * k)),
            &Op::AddScalar(a) => self.accumulate(grads, a, g.clone()),
            &Op::Sigmoid(a) => self.accumulate(grads, a, g.zip_map(y, |g, s| g * s * (1.0 - s))),
            &Op::Gelu(a) => self.accumulate(grads, a, g.zip_map(val(a), |g, x| g * gelu_grad(x))),
            &Op::Softplus(a) => self.accumulate(grads, a, g.zip_map(val(a), |g, x| g * sigmoid(x))),
            &Op::Log(a) => self.accumulate(grads, a, g.zip_map(val(a), |g, x| g / x)),
            &Op::Conv { x, w, b, geom } => {
                let (cin, h, wd, cout, oh, ow) = conv_dims(val(x), val(w), geom);
                let kk = cin * geom.kernel * geom.kernel;
                let n = oh * ow;
                if self.nodes[w.0].requires_grad {
                    let cols = kernels::im2col(val(x).data(), cin, h, wd, geom, oh, ow);
                    let mut dw = vec![0.0; cout * kk];
                    kernels::gemm(cout, n, kk, g.data(), false, &cols, true, 0.0, &mut dw);
                    self.accumulate(grads, w, like(w, dw));
                }
                if self.nodes[x.0].requires_grad {
                    let mut dcols = vec![0.0; kk * n];
                    kernels::gemm(kk, cout, n, val(w).data(), true, g.data(), false, 0.0, &mut dcols);
                    let dx = kernels::col2im(&dcols, cin, h, wd, geom, oh, ow);
                    self.accumulate(grads, x, like(x, dx));
                }
                if let Some(b) = b {
                    let db = g.data().chunks(n).map(|c| c.iter().sum()).collect();
                    self.accumulate(grads, b, like(b, db));
                }
            }
            &Op::Resize(x) => {
                let (c, h, w) = val(x).dims3().unwrap();
                let (_, oh, ow) = y.dims3().unwrap();
                let dx = kernels::resize_bilinear_backward(g.data(), c, h, w, oh, ow);
                self.accumulate(grads, x, like(x, dx));
            }
            &Op::Haar(x) => {
                let (c, h, w) = val(x).dims3().unwrap();
                let dx = kernels::haar_synthesis(g.data(), c, h, w);
                self.accumulate(grads, x, like(x, dx));
            }
            Op::Concat(xs) => {
                let mut offset = 0;
                for &x in xs {
                    let len = val(x).len();
                    self.accumulate(grads, x, like(x, g.data()[offset..offset + len].to_vec()));
                    offset += len;
                }
            }
            &Op::Slice { x, start } => {
                let plane: usize = val(x).shape()[1..].iter().product();
                let mut dx = vec![0.0; val(x).len()];
                dx[start * plane..start * plane + g.len()].copy_from_slice(g.data());
                self.accumulate(grads, x, like(x, dx));
            }
            &Op::MatMul(a, b) => {
                let (m, k) = val(a).dims2().unwrap();
                let n = val(b).shape()[1];
                if self.nodes[a.0].requires_grad {
                    let mut da = vec![0.0; m * k];
                    kernels::gemm(m, n, k, g.data(), false, val(b).data(), true, 0.0, &mut da);
                    self.accumulate(grads, a, like(a, da));
                }
                if self.nodes[b.0].requires_grad {
                    let mut db = vec![0.0; k * n];
                    kernels::gemm(k, m, n, val(a).data(), true, g.data(), false, 0.0, &mut db);
                    self.accumulate(grads, b, like(b, db));
                }
            }
            &Op::Transpose(x) => {
                let (r, c) = y.dims2().unwrap();
                self.accumulate(grads, x, like(x, transpose(g.data(), r, c)));
            }
            &Op::Reshape(x) => self.accumulate(grads, x, like(x, g.data().to_vec())),
            &Op::SoftmaxRows(x) => {
                let (_, c) = y.dims2().unwrap();
                let mut dx = Vec::with_capacity(y.len());
                for (yr, gr) in y.data().chunks(c).zip(g.data().chunks(c)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    dx.extend(yr.iter().zip(gr).map(|(y, g)| y * (g - dot)));
                }
                self.accumulate(grads, x, like(x, dx));
            }
            &Op::LogSoftmaxRows(x) => {
                let (_, c) = y.dims2().unwrap();
                let mut dx = Vec::with_capacity(y.len());
                for (yr, gr) in y.data().chunks(c).zip(g.data().chunks(c)) {
                    let total: f64 = gr.iter().sum();
                    dx.extend(yr.iter().zip(gr).map(|(y, g)| g - y.exp() * total));
                }
                self.accumulate(grads, x, like(x, dx));
            }
            &Op::BoxMean { x, radius } => {
                let (c, h, w) = val(x).dims3().unwrap();
                let dx = kernels::box_mean_backward(g.data(), c, h, w, radius);
                self.accumulate(grads, x, like(x, dx));
            }
            &Op::AdaptivePool(x) => {
                let (c, h, w) = val(x).dims3().unwrap();
                let (_, oh, ow) = y.dims3().unwrap();
                let dx = kernels::adaptive_avg_pool_backward(g.data(), c, h, w, oh, ow);
                self.accumulate(grads, x, like(x, dx));
            }
            &Op::BroadcastSpatial(v) => {
                let plane = y.len() / val(v).len();
                let dv = g.data().chunks(plane).map(|c| c.iter().sum()).collect();
                self.accumulate(grads, v, like(v, dv));
            }
            &Op::AddRowBias(x, b) => {
                let c = val(b).len();
                let mut db = vec![0.0; c];
                for row in g.data().chunks(c) {
                    db.iter_mut().zip(row).for_each(|(d, g)| *d += g);
                }
                self.accumulate(grads, x, g.clone());
                self.accumulate(grads, b, like(b, db));
            }
            &Op::AddChannelBias(x, b) => {
                let plane = y.len() / val(b).len();
                let db = g.data().chunks(plane).map(|c| c.iter().sum()).collect();
                self.accumulate(grads, x, g.clone());
                self.accumulate(grads, b, like(b, db));
            }
            &Op::Sum(x) => {
                let gv = g.item();
                self.accumulate(grads, x, val(x).map(|_| gv));
            }
            &Op::Mean(x) => {
                let gv = g.item() / val(x).len() as f64;
                self.accumulate(grads, x, val(x).map(|_| gv));
            }
        }
    }
}

/// Result of [`Graph::backward`].
pub struct Gradients {
    params: HashMap<ParamId, Tensor>,
    leaves: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a trainable parameter; `None` if it did not influence the loss.
    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(&id)
    }

    /// Gradient of a [`Graph::variable`] leaf.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.leaves[v.0].as_ref()
    }

    pub fn into_params(self) -> HashMap<ParamId, Tensor> {
        self.params
    }
}
