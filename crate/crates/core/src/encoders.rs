//! Network contracts: frozen image/depth encoder, trainable student pyramid,
//! frozen box-prompt encoder and the promptable mask decoder.
//!
//! All image-side encoders run at patch stride [`PATCH`], so an input of side
//! `size` yields an embedding grid of side `size / PATCH`.

use std::f64::consts::TAU;

use crate::autograd::{Graph, Var};
use crate::data::BoxPrompt;
use crate::kernels::ConvGeom;
use crate::nn::{self, Attention, Conv2d, Linear};
use crate::params::{Init, ParamBuilder, ParamGroup, ParamId, ParamStore};
use crate::tensor::Tensor;
use crate::{Error, Result};

pub const PATCH: usize = 4;

fn check_square(t: &Tensor, channels: usize) -> Result<usize> {
    let (c, h, w) = t.dims3()?;
    if c != channels || h != w || h % PATCH != 0 {
        return Err(Error::shape(format!("expected square [{channels}, N, N] with N divisible by {PATCH}, got {:?}", t.shape())));
    }
    Ok(h)
}

/// Frozen conv/attention hybrid shared by the depth teacher and the RGB image
/// embedding. Parameters live in [`ParamGroup::Teacher`].
#[derive(Clone, Debug)]
pub struct FrozenEncoder {
    patch: Conv2d,
    local: Conv2d,
    attn: Attention,
    neck: Conv2d,
}

impl FrozenEncoder {
    pub fn new(b: &mut ParamBuilder, embed: usize) -> Self {
        let g = ParamGroup::Teacher;
        Self {
            patch: Conv2d::new(b, "encoder.patch", g, 3, embed, ConvGeom::patch(PATCH)),
            local: Conv2d::new(b, "encoder.local", g, embed, embed, ConvGeom::same(3, 1)),
            attn: Attention::new(b, "encoder.attn", g, embed),
            neck: Conv2d::new(b, "encoder.neck", g, embed, embed, ConvGeom::pointwise()),
        }
    }

    /// `[3, H, W]` → `[E, H/4, W/4]`.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let p = self.patch.forward(g, x);
        let p = g.gelu(p);
        let l = self.local.forward(g, p);
        let l = g.gelu(l);
        let x = g.add(p, l);
        let s = g.shape(x)[1];
        let t = nn::to_tokens(g, x);
        let a = self.attn.forward(g, t, t, t);
        let t = g.add(t, a);
        let x = nn::from_tokens(g, t, s, s);
        self.neck.forward(g, x)
    }

    /// Em_t: the frozen encoder applied to depth replicated over three centred channels.
    pub fn encode_depth(&self, store: &ParamStore, depth: &Tensor) -> Result<Tensor> {
        let n = check_square(depth, 1)?;
        let centred = depth.map(|d| (d - 0.5) / 0.25);
        let mut rgb = Vec::with_capacity(3 * n * n);
        for _ in 0..3 {
            rgb.extend_from_slice(centred.data());
        }
        self.encode(store, &Tensor::new(vec![3, n, n], rgb)?)
    }

    /// Image embedding of a preprocessed `[3, H, W]` image.
    pub fn encode_image(&self, store: &ParamStore, image: &Tensor) -> Result<Tensor> {
        check_square(image, 3)?;
        self.encode(store, image)
    }

    fn encode(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::inference(store);
        let x = g.input(x.clone());
        let y = self.forward(&mut g, x);
        Ok(g.value(y).clone())
    }
}

/// Student pyramid output.
#[derive(Clone, Debug)]
pub struct Pyramid {
    /// `(features, stride)` ordered by increasing stride.
    pub levels: Vec<(Var, usize)>,
    /// Designated level matching the teacher grid.
    pub em_i: Var,
}

/// Trainable two-level strided pyramid (strides 4 and 8) with an FPN-style
/// lateral merging the coarse level back into the stride-4 output.
#[derive(Clone, Debug)]
pub struct StudentEncoder {
    stem: Conv2d,
    stem_local: Conv2d,
    down: Conv2d,
    lateral: Conv2d,
}

impl StudentEncoder {
    pub fn new(b: &mut ParamBuilder, embed: usize) -> Self {
        let g = ParamGroup::Student;
        Self {
            stem: Conv2d::new(b, "student.stem", g, 3, embed, ConvGeom::patch(PATCH)),
            stem_local: Conv2d::new(b, "student.stem_local", g, embed, embed, ConvGeom::same(3, 1)),
            down: Conv2d::new(b, "student.down", g, embed, 2 * embed, ConvGeom::patch(2)),
            lateral: Conv2d::new(b, "student.lateral", g, 2 * embed, embed, ConvGeom::pointwise()),
        }
    }

    pub fn forward(&self, g: &mut Graph, image: Var) -> Result<Pyramid> {
        let n = check_square(g.value(image), 3)?;
        if n % (2 * PATCH) != 0 {
            return Err(Error::shape(format!("student input side {n} must be divisible by {}", 2 * PATCH)));
        }
        let x = self.stem.forward(g, image);
        let x = g.gelu(x);
        let x = self.stem_local.forward(g, x);
        let l1 = g.gelu(x);
        let x = self.down.forward(g, l1);
        let l2 = g.gelu(x);
        let s = n / PATCH;
        let up = g.resize(l2, s, s);
        let lat = self.lateral.forward(g, up);
        let em_i = g.add(l1, lat);
        Ok(Pyramid { levels: vec![(l1, PATCH), (l2, 2 * PATCH)], em_i })
    }
}

/// Box-prompt tokens split into their positional and corner-type parts.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxTokens {
    pub positional: Tensor,
    pub corner_type: Tensor,
    /// `positional + corner_type`, `[2, E]`.
    pub tokens: Tensor,
}

/// Frozen random-Fourier positional encoder for box corners and the dense grid.
#[derive(Clone, Debug)]
pub struct PromptEncoder {
    gaussian: ParamId,
    corners: ParamId,
    embed: usize,
}

impl PromptEncoder {
    pub fn new(b: &mut ParamBuilder, embed: usize) -> Self {
        let g = ParamGroup::PromptEncoder;
        Self {
            gaussian: b.tensor("prompt.gaussian", g, &[2, embed / 2], Init::Normal(1.0)),
            corners: b.tensor("prompt.corners", g, &[2, embed], Init::Normal(1.0)),
            embed,
        }
    }

    /// Fourier features of a point with coordinates normalised to [0,1].
    fn encode_point(&self, store: &ParamStore, x: f64, y: f64) -> Vec<f64> {
        let g = store.get(self.gaussian).value().data();
        let half = self.embed / 2;
        let (u, v) = (2.0 * x - 1.0, 2.0 * y - 1.0);
        let proj: Vec<f64> = (0..half).map(|j| TAU * (u * g[j] + v * g[half + j])).collect();
        proj.iter().map(|p| p.sin()).chain(proj.iter().map(|p| p.cos())).collect()
    }

    pub fn encode_box(&self, store: &ParamStore, bbox: &BoxPrompt, image_size: usize) -> Result<BoxTokens> {
        bbox.validate(image_size, image_size)?;
        let s = image_size as f64;
        let mut positional = self.encode_point(store, bbox.x_min as f64 / s, bbox.y_min as f64 / s);
        positional.extend(self.encode_point(store, bbox.x_max as f64 / s, bbox.y_max as f64 / s));
        let positional = Tensor::new(vec![2, self.embed], positional)?;
        let corner_type = store.get(self.corners).value().clone();
        let tokens = positional.zip_map(&corner_type, |a, b| a + b);
        Ok(BoxTokens { positional, corner_type, tokens })
    }

    /// Positional encoding of every cell centre of an `s × s` grid, `[s·s, E]`.
    pub fn dense_pe(&self, store: &ParamStore, s: usize) -> Tensor {
        let mut data = Vec::with_capacity(s * s * self.embed);
        for y in 0..s {
            for x in 0..s {
                data.extend(self.encode_point(store, (x as f64 + 0.5) / s as f64, (y as f64 + 0.5) / s as f64));
            }
        }
        Tensor::new(vec![s * s, self.embed], data).unwrap()
    }
}

/// Output heads start small so initial logits sit near zero.
pub const HEAD_STD: f64 = 1e-2;

/// Two-way token/image attention decoder with a hypernetwork mask head.
#[derive(Clone, Debug)]
pub struct MaskDecoder {
    mask_token: ParamId,
    token_to_image: Attention,
    image_to_token: Attention,
    final_attn: Attention,
    neck: Conv2d,
    up1: Conv2d,
    up2: Conv2d,
    hyper1: Linear,
    hyper2: Linear,
    mask_bias: ParamId,
}

impl MaskDecoder {
    pub fn new(b: &mut ParamBuilder, embed: usize) -> Self {
        let g = ParamGroup::Decoder;
        Self {
            mask_token: b.tensor("decoder.mask_token", g, &[1, embed], Init::Normal(1.0)),
            token_to_image: Attention::new(b, "decoder.token_to_image", g, embed),
            image_to_token: Attention::new(b, "decoder.image_to_token", g, embed),
            final_attn: Attention::new(b, "decoder.final_attn", g, embed),
            neck: Conv2d::new(b, "decoder.neck", g, embed, embed, ConvGeom::same(3, 1)),
            up1: Conv2d::new(b, "decoder.up1", g, embed, embed / 2, ConvGeom::same(3, 1)),
            up2: Conv2d::new(b, "decoder.up2", g, embed / 2, embed / 4, ConvGeom::same(3, 1)),
            hyper1: Linear::new(b, "decoder.hyper1", g, embed, embed),
            hyper2: Linear::with_init(b, "decoder.hyper2", g, embed, embed / 4, Init::Normal(HEAD_STD)),
            mask_bias: b.tensor("decoder.mask_bias", g, &[1], Init::Zeros),
        }
    }

    /// `img_emb [E,S,S]`, `sparse [2,E]`, optional `dense [E,S,S]`, `pe [S·S,E]` → logits `[1, 4S, 4S]`.
    pub fn forward(&self, g: &mut Graph, img_emb: Var, sparse: Var, dense: Option<Var>, pe: Var) -> Result<Var> {
        let (e, s, s2) = g.value(img_emb).dims3()?;
        if s != s2 || g.shape(sparse) != [2, e] || g.shape(pe) != [s * s, e] {
            return Err(Error::shape(format!(
                "decoder inputs: img_emb {:?}, sparse {:?}, pe {:?}",
                g.shape(img_emb),
                g.shape(sparse),
                g.shape(pe)
            )));
        }
        let x = match dense {
            Some(d) if g.shape(d) != g.shape(img_emb) => {
                return Err(Error::shape(format!("dense prompt {:?} vs image embedding {:?}", g.shape(d), g.shape(img_emb))))
            }
            Some(d) => g.add(img_emb, d),
            None => img_emb,
        };
        let x = nn::to_tokens(g, x);
        let mask_token = g.param(self.mask_token);
        let t0 = g.concat(&[mask_token, sparse]);

        let xp = g.add(x, pe);
        let a = self.token_to_image.forward(g, t0, xp, x);
        let t1 = g.add(t0, a);
        let tk = g.add(t1, t0);
        let a = self.image_to_token.forward(g, xp, tk, t1);
        let x1 = g.add(x, a);
        let x1p = g.add(x1, pe);
        let a = self.final_attn.forward(g, tk, x1p, x1);
        let t2 = g.add(t1, a);

        let img = nn::from_tokens(g, x1, s, s);
        let u = self.neck.forward(g, img);
        let u = g.gelu(u);
        let u = g.resize(u, 2 * s, 2 * s);
        let u = self.up1.forward(g, u);
        let u = g.gelu(u);
        let u = g.resize(u, 4 * s, 4 * s);
        let u = self.up2.forward(g, u);
        let u = g.gelu(u);

        let token = g.slice(t2, 0, 1);
        let h = self.hyper1.forward(g, token);
        let h = g.gelu(h);
        let w = self.hyper2.forward(g, h);
        let c = g.shape(u)[0];
        let flat = g.reshape(u, &[c, 16 * s * s]);
        let logits = g.matmul(w, flat);
        let logits = g.reshape(logits, &[1, 4 * s, 4 * s]);
        let bias = g.param(self.mask_bias);
        Ok(g.add_channel_bias(logits, bias))
    }
}
