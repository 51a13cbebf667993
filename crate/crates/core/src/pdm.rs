//! Depth-aware prompt construction: bias correction of student features,
//! channel-wise distillation against the frozen depth teacher, Haar
//! high-frequency extraction and fusion with the box-prompt tokens.

use crate::autograd::{Graph, Var};
use crate::kernels::ConvGeom;
use crate::nn::Conv2d;
use crate::params::{ParamBuilder, ParamGroup};
use crate::{Error, Result};

/// Dilation used by every dilated convolution in the model.
pub const DILATION: usize = 2;

/// Bias-correction block: `Down(P(x) + CP(P(x)))`, where `CP` widens to twice
/// the channels and back with dilated 3×3 convolutions.
#[derive(Clone, Debug)]
pub struct Bcm {
    pub proj: Conv2d,
    pub cp_up: Conv2d,
    pub cp_down: Conv2d,
    pub down: Conv2d,
    cin: usize,
}

impl Bcm {
    pub fn new(b: &mut ParamBuilder, name: &str, group: ParamGroup, cin: usize, width: usize, cout: usize) -> Self {
        let dil = ConvGeom::same(3, DILATION);
        Self {
            proj: Conv2d::new(b, &format!("{name}.proj"), group, cin, width, ConvGeom::pointwise()),
            cp_up: Conv2d::new(b, &format!("{name}.cp_up"), group, width, 2 * width, dil),
            cp_down: Conv2d::new(b, &format!("{name}.cp_down"), group, 2 * width, width, dil),
            down: Conv2d::new(b, &format!("{name}.down"), group, width, cout, ConvGeom::pointwise()),
            cin,
        }
    }

    /// Bilinearly resamples `x` to `grid × grid`, then applies the block.
    pub fn forward(&self, g: &mut Graph, x: Var, grid: usize) -> Result<Var> {
        let (c, _, _) = g.value(x).dims3()?;
        if c != self.cin {
            return Err(Error::shape(format!("bias-correction block expects {} channels, got {c}", self.cin)));
        }
        let x = g.resize(x, grid, grid);
        let p = self.proj.forward(g, x);
        let h = self.cp_up.forward(g, p);
        let h = g.gelu(h);
        let h = self.cp_down.forward(g, h);
        let h = g.add(p, h);
        Ok(self.down.forward(g, h))
    }
}

/// `T² · mean_c KL(p_c ‖ q_c)` over per-channel spatial softmaxes of `x / T`.
/// The teacher is detached.
pub fn cwd_loss(g: &mut Graph, em_t: Var, em_s: Var, temperature: f64) -> Result<Var> {
    if g.shape(em_t) != g.shape(em_s) {
        return Err(Error::shape(format!("teacher {:?} vs student {:?}", g.shape(em_t), g.shape(em_s))));
    }
    if temperature <= 0.0 {
        return Err(Error::BadConfig(format!("temperature must be positive, got {temperature}")));
    }
    let shape = g.shape(em_t).to_vec();
    let c = shape[0];
    let n: usize = shape[1..].iter().product();
    let t = g.detach(em_t);
    let t = g.reshape(t, &[c, n]);
    let t = g.scale(t, 1.0 / temperature);
    let p = g.softmax_rows(t);
    let log_p = g.log_softmax_rows(t);
    let s = g.reshape(em_s, &[c, n]);
    let s = g.scale(s, 1.0 / temperature);
    let log_q = g.log_softmax_rows(s);
    let diff = g.sub(log_p, log_q);
    let kl = g.mul(p, diff);
    let total = g.sum(kl);
    Ok(g.scale(total, temperature * temperature / c as f64))
}

/// LH, HL and HH Haar subbands of `cat(resample(em_i), em_s)`, upsampled back
/// to the student grid: `[6E, S, S]` for `E`-channel inputs.
pub fn highfreq_bands(g: &mut Graph, em_i: Var, em_s: Var) -> Result<Var> {
    let (cs, s, s2) = g.value(em_s).dims3()?;
    let (ci, _, _) = g.value(em_i).dims3()?;
    if s != s2 || s % 2 != 0 {
        return Err(Error::shape(format!("wavelet input must be square with even side, got {:?}", g.shape(em_s))));
    }
    let em_i = g.resize(em_i, s, s);
    let cat = g.concat(&[em_i, em_s]);
    let bands = g.haar(cat);
    let c = ci + cs;
    let detail = g.slice(bands, c, 3 * c);
    Ok(g.resize(detail, s, s))
}

/// Wavelet high-frequency branch: subbands followed by a 1×1 projection to `E`.
#[derive(Clone, Debug)]
pub struct HighFreq {
    pub proj: Conv2d,
}

impl HighFreq {
    pub fn new(b: &mut ParamBuilder, embed: usize) -> Self {
        Self { proj: Conv2d::new(b, "pdm.hf_proj", ParamGroup::Pdm, 6 * embed, embed, ConvGeom::pointwise()) }
    }

    pub fn forward(&self, g: &mut Graph, em_i: Var, em_s: Var) -> Result<Var> {
        let bands = highfreq_bands(g, em_i, em_s)?;
        Ok(self.proj.forward(g, bands))
    }
}

/// Prompt fusion: token mean → broadcast → conv stack, concatenated with the
/// high-frequency map and fused by a dilated convolution.
#[derive(Clone, Debug)]
pub struct Pfm {
    pub dcs1: Conv2d,
    pub dcs2: Conv2d,
    pub dc: Conv2d,
    embed: usize,
}

impl Pfm {
    pub fn new(b: &mut ParamBuilder, embed: usize) -> Self {
        let g = ParamGroup::Pdm;
        Self {
            dcs1: Conv2d::new(b, "pdm.pfm.dcs1", g, embed, embed, ConvGeom::pointwise()),
            dcs2: Conv2d::new(b, "pdm.pfm.dcs2", g, embed, embed, ConvGeom::same(3, 1)),
            dc: Conv2d::new(b, "pdm.pfm.dc", g, 2 * embed, embed, ConvGeom::same(3, DILATION)),
            embed,
        }
    }

    /// `em_b [2, E]`, `hf [E, S, S]` → dense prompt `[E, S, S]`.
    pub fn forward(&self, g: &mut Graph, em_b: Var, hf: Var) -> Result<Var> {
        let e = self.embed;
        let (c, s, s2) = g.value(hf).dims3()?;
        if c != e || s != s2 || g.shape(em_b) != [2, e] {
            return Err(Error::shape(format!("prompt fusion inputs: tokens {:?}, hf {:?}", g.shape(em_b), g.shape(hf))));
        }
        let a = g.slice(em_b, 0, 1);
        let b = g.slice(em_b, 1, 1);
        let sum = g.add(a, b);
        let mean = g.scale(sum, 0.5);
        let x = g.broadcast_spatial(mean, s, s);
        let x = self.dcs1.forward(g, x);
        let x = g.gelu(x);
        let x = self.dcs2.forward(g, x);
        let cat = g.concat(&[x, hf]);
        Ok(self.dc.forward(g, cat))
    }
}

#[derive(Clone, Debug)]
pub struct Pdm {
    pub bcm: Bcm,
    pub hf: HighFreq,
    pub pfm: Pfm,
}

#[derive(Clone, Copy, Debug)]
pub struct PdmOutput {
    pub em_s: Var,
    pub loss_kd: Var,
    pub prompt_depth: Var,
}

impl Pdm {
    pub fn new(b: &mut ParamBuilder, embed: usize) -> Self {
        Self {
            bcm: Bcm::new(b, "pdm.bcm", ParamGroup::Pdm, embed, embed, embed),
            hf: HighFreq::new(b, embed),
            pfm: Pfm::new(b, embed),
        }
    }

    pub fn forward(&self, g: &mut Graph, em_i: Var, em_t: Var, em_b: Var, temperature: f64) -> Result<PdmOutput> {
        let grid = g.shape(em_t)[1];
        let em_s = self.bcm.forward(g, em_i, grid)?;
        let loss_kd = cwd_loss(g, em_t, em_s, temperature)?;
        let hf = self.hf.forward(g, em_i, em_s)?;
        let prompt_depth = self.pfm.forward(g, em_b, hf)?;
        Ok(PdmOutput { em_s, loss_kd, prompt_depth })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamStore;
    use crate::tensor::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    fn cwd_value(t: &Tensor, s: &Tensor, temp: f64) -> f64 {
        let store = ParamStore::default();
        let mut g = Graph::new(&store);
        let (t, s) = (g.input(t.clone()), g.input(s.clone()));
        let l = cwd_loss(&mut g, t, s, temp).unwrap();
        g.value(l).item()
    }

    #[test]
    fn cwd_two_point_closed_form() {
        let t = Tensor::new(vec![1, 1, 2], vec![0.0, 3f64.ln()]).unwrap();
        let s = Tensor::zeros(&[1, 1, 2]);
        // p = (1/4, 3/4), q = (1/2, 1/2)
        let expected = 0.25 * (0.25f64 / 0.5).ln() + 0.75 * (0.75f64 / 0.5).ln();
        assert!((cwd_value(&t, &s, 1.0) - expected).abs() < 1e-12);
        assert!((expected - 0.130_812_035_941_137).abs() < 1e-14);
    }

    #[test]
    fn cwd_identity_shift_and_sign() {
        let t = random(&[3, 4, 4], 1);
        assert_eq!(cwd_value(&t, &t, 4.0), 0.0);
        let shifted = Tensor::from_fn(&[3, 4, 4], |i| t.data()[i] + (i / 16) as f64 * 1.5);
        assert!(cwd_value(&t, &shifted, 4.0).abs() < 1e-12);
        assert!(cwd_value(&t, &random(&[3, 4, 4], 2), 4.0) > 0.0);
    }

    #[test]
    fn cwd_rejects_mismatch() {
        let store = ParamStore::default();
        let mut g = Graph::new(&store);
        let t = g.input(Tensor::zeros(&[2, 4, 4]));
        let s = g.input(Tensor::zeros(&[3, 4, 4]));
        assert!(matches!(cwd_loss(&mut g, t, s, 1.0), Err(Error::BadShape(_))));
    }

    #[test]
    fn cwd_teacher_is_detached() {
        let store = ParamStore::default();
        let mut g = Graph::new(&store);
        let t = g.variable(random(&[2, 3, 3], 3));
        let s = g.variable(random(&[2, 3, 3], 4));
        let l = cwd_loss(&mut g, t, s, 2.0).unwrap();
        let grads = g.backward(l);
        assert!(grads.wrt(t).is_none());
        assert!(grads.wrt(s).is_some());
    }

    fn pdm(embed: usize) -> (ParamStore, Pdm) {
        let mut store = ParamStore::default();
        let mut b = ParamBuilder::new(&mut store, 0);
        let p = Pdm::new(&mut b, embed);
        (store, p)
    }

    #[test]
    fn bcm_shape_zero_and_channel_check() {
        let (store, p) = pdm(4);
        let mut g = Graph::new(&store);
        let x = g.input(Tensor::zeros(&[4, 8, 8]));
        let y = p.bcm.forward(&mut g, x, 4).unwrap();
        assert_eq!(g.shape(y), [4, 4, 4]);
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
        let bad = g.input(Tensor::zeros(&[3, 4, 4]));
        assert!(matches!(p.bcm.forward(&mut g, bad, 4), Err(Error::BadShape(_))));
    }

    #[test]
    fn constant_input_has_no_detail() {
        let store = ParamStore::default();
        let mut g = Graph::new(&store);
        let a = g.input(Tensor::full(&[2, 4, 4], 0.7));
        let b = g.input(Tensor::full(&[2, 4, 4], -1.3));
        let bands = highfreq_bands(&mut g, a, b).unwrap();
        assert_eq!(g.shape(bands), [12, 4, 4]);
        assert!(g.value(bands).data().iter().all(|&v| v == 0.0));
        let odd = g.input(Tensor::zeros(&[2, 5, 5]));
        assert!(matches!(highfreq_bands(&mut g, odd, odd), Err(Error::BadShape(_))));
    }

    #[test]
    fn pfm_shape_and_zero() {
        let (store, p) = pdm(4);
        let mut g = Graph::new(&store);
        let tok = g.input(Tensor::zeros(&[2, 4]));
        let hf = g.input(Tensor::zeros(&[4, 6, 6]));
        let out = p.pfm.forward(&mut g, tok, hf).unwrap();
        assert_eq!(g.shape(out), [4, 6, 6]);
        assert!(g.value(out).data().iter().all(|&v| v == 0.0));
    }
}
