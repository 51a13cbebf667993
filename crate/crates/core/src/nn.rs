//! Small layer building blocks over the autodiff graph.

use crate::autograd::{Graph, Var};
use crate::kernels::ConvGeom;
use crate::params::{Init, ParamBuilder, ParamGroup, ParamId};

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub geom: ConvGeom,
}

impl Conv2d {
    pub fn new(b: &mut ParamBuilder, name: &str, group: ParamGroup, cin: usize, cout: usize, geom: ConvGeom) -> Self {
        Self::with_init(b, name, group, cin, cout, geom, Init::Kaiming(cin * geom.kernel * geom.kernel))
    }

    pub fn with_init(
        b: &mut ParamBuilder,
        name: &str,
        group: ParamGroup,
        cin: usize,
        cout: usize,
        geom: ConvGeom,
        init: Init,
    ) -> Self {
        let k = geom.kernel;
        let weight = b.tensor(&format!("{name}.weight"), group, &[cout, cin, k, k], init);
        let bias = b.tensor(&format!("{name}.bias"), group, &[cout], Init::Zeros);
        Self { weight, bias, geom }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let (w, b) = (g.param(self.weight), g.param(self.bias));
        g.conv2d(x, w, Some(b), self.geom)
    }

    pub fn out_channels(&self, g: &Graph) -> usize {
        g.store().get(self.weight).value().shape()[0]
    }
}

/// Token-wise affine map `[N, in] → [N, out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new(b: &mut ParamBuilder, name: &str, group: ParamGroup, din: usize, dout: usize) -> Self {
        Self::with_init(b, name, group, din, dout, Init::Lecun(din))
    }

    pub fn with_init(b: &mut ParamBuilder, name: &str, group: ParamGroup, din: usize, dout: usize, init: Init) -> Self {
        let weight = b.tensor(&format!("{name}.weight"), group, &[din, dout], init);
        let bias = b.tensor(&format!("{name}.bias"), group, &[dout], Init::Zeros);
        Self { weight, bias }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let (w, b) = (g.param(self.weight), g.param(self.bias));
        let y = g.matmul(x, w);
        g.add_row_bias(y, b)
    }
}

/// Single-head scaled dot-product attention with output projection.
#[derive(Clone, Debug)]
pub struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    dim: usize,
}

impl Attention {
    pub fn new(b: &mut ParamBuilder, name: &str, group: ParamGroup, dim: usize) -> Self {
        Self {
            q: Linear::new(b, &format!("{name}.q"), group, dim, dim),
            k: Linear::new(b, &format!("{name}.k"), group, dim, dim),
            v: Linear::new(b, &format!("{name}.v"), group, dim, dim),
            out: Linear::new(b, &format!("{name}.out"), group, dim, dim),
            dim,
        }
    }

    /// `q_in [Nq, D]`, `k_in`/`v_in` `[Nk, D]` → `[Nq, D]`.
    pub fn forward(&self, g: &mut Graph, q_in: Var, k_in: Var, v_in: Var) -> Var {
        let q = self.q.forward(g, q_in);
        let k = self.k.forward(g, k_in);
        let v = self.v.forward(g, v_in);
        let kt = g.transpose(k);
        let logits = g.matmul(q, kt);
        let logits = g.scale(logits, 1.0 / (self.dim as f64).sqrt());
        let attn = g.softmax_rows(logits);
        let mixed = g.matmul(attn, v);
        self.out.forward(g, mixed)
    }
}

/// `[C, H, W]` → tokens `[H·W, C]`.
pub fn to_tokens(g: &mut Graph, x: Var) -> Var {
    let s = g.shape(x).to_vec();
    let flat = g.reshape(x, &[s[0], s[1] * s[2]]);
    g.transpose(flat)
}

/// Tokens `[H·W, C]` → `[C, H, W]`.
pub fn from_tokens(g: &mut Graph, t: Var, h: usize, w: usize) -> Var {
    let c = g.shape(t)[1];
    let flat = g.transpose(t);
    g.reshape(flat, &[c, h, w])
}
