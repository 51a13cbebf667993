//! Re-segmentation of regions the first prediction missed: mask reversion
//! nested into channel segments, a self-guided filter stream, an agent
//! attention stream and a joint-mining head.

use crate::autograd::{Graph, Var};
use crate::kernels::ConvGeom;
use crate::nn::{self, Conv2d, Linear};
use crate::encoders::HEAD_STD;
use crate::params::{Init, ParamBuilder, ParamGroup};
use crate::pdm::Bcm;
use crate::{Error, Result};

/// Allowed segment counts.
pub const SEGMENTS: [usize; 4] = [2, 4, 8, 16];

/// Interleaves the `k` channel segments of `em` with the reversed mask
/// `1 − down(sigmoid(pred))`: `seg_1, m', seg_2, m', …` (`C + k` channels).
pub fn reverse_and_nest(g: &mut Graph, em: Var, pred: Var, k: usize) -> Result<Var> {
    let (c, s, _) = g.value(em).dims3()?;
    if k == 0 || c % k != 0 {
        return Err(Error::BadSegments { channels: c, k });
    }
    let (pc, _, _) = g.value(pred).dims3()?;
    if pc != 1 {
        return Err(Error::shape(format!("prediction must have one channel, got {:?}", g.shape(pred))));
    }
    let m = g.sigmoid(pred);
    let m = g.resize(m, s, s);
    let neg = g.scale(m, -1.0);
    let rev = g.add_scalar(neg, 1.0);
    let seg = c / k;
    let mut parts = Vec::with_capacity(2 * k);
    for i in 0..k {
        parts.push(g.slice(em, i * seg, seg));
        parts.push(rev);
    }
    Ok(g.concat(&parts))
}

/// Self-guided filter per channel: `a = var/(var+eps)`, `b = mean·(1−a)`,
/// output `box(a)·x + box(b)` over `(2r+1)²` windows clipped to the map.
pub fn guided_filter(g: &mut Graph, x: Var, radius: usize, eps: f64) -> Result<Var> {
    let (_, h, w) = g.value(x).dims3()?;
    if 2 * radius + 1 > h.min(w) {
        return Err(Error::BadRadius { radius, size: h.min(w) });
    }
    let mean = g.box_mean(x, radius);
    let sq = g.mul(x, x);
    let mean_sq = g.box_mean(sq, radius);
    let mean2 = g.mul(mean, mean);
    let var = g.sub(mean_sq, mean2);
    let denom = g.add_scalar(var, eps);
    let a = g.div(var, denom);
    let ma = g.mul(mean, a);
    let b = g.sub(mean, ma);
    let box_a = g.box_mean(a, radius);
    let box_b = g.box_mean(b, radius);
    let ax = g.mul(box_a, x);
    Ok(g.add(ax, box_b))
}

/// Agent grid for `n` agents: the most square `h × w = n` with `h ≤ w`.
pub fn agent_grid(n: usize) -> (usize, usize) {
    let h = (1..=n).take_while(|d| d * d <= n).filter(|d| n % d == 0).last().unwrap_or(1);
    (h, n / h)
}

/// Two-stage softmax attention through `n_agents` pooled query tokens, with a
/// residual connection and no output projection.
#[derive(Clone, Debug)]
pub struct AgentAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub n_agents: usize,
    dim: usize,
}

impl AgentAttention {
    pub fn new(b: &mut ParamBuilder, name: &str, group: ParamGroup, dim: usize, n_agents: usize) -> Self {
        Self {
            q: Linear::new(b, &format!("{name}.q"), group, dim, dim),
            k: Linear::new(b, &format!("{name}.k"), group, dim, dim),
            v: Linear::new(b, &format!("{name}.v"), group, dim, dim),
            n_agents,
            dim,
        }
    }

    /// `[C, S, S]` → `[C, S, S]`.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let (c, h, w) = g.value(x).dims3()?;
        let (ah, aw) = agent_grid(self.n_agents);
        if c != self.dim || self.n_agents == 0 || ah > h || aw > w {
            return Err(Error::shape(format!(
                "agent attention over {:?} with {} agents ({ah}x{aw}) and dim {}",
                g.shape(x),
                self.n_agents,
                self.dim
            )));
        }
        let t = nn::to_tokens(g, x);
        let q = self.q.forward(g, t);
        let k = self.k.forward(g, t);
        let v = self.v.forward(g, t);
        let qmap = nn::from_tokens(g, q, h, w);
        let pooled = g.adaptive_pool(qmap, ah, aw);
        let pooled = g.reshape(pooled, &[c, ah * aw]);
        let agents = g.transpose(pooled);
        let scale = 1.0 / (c as f64).sqrt();

        let at = g.transpose(agents);
        let qa = g.matmul(q, at);
        let qa = g.scale(qa, scale);
        let qa = g.softmax_rows(qa);
        let kt = g.transpose(k);
        let ak = g.matmul(agents, kt);
        let ak = g.scale(ak, scale);
        let ak = g.softmax_rows(ak);
        let agent_v = g.matmul(ak, v);
        let out = g.matmul(qa, agent_v);
        let out = g.add(out, t);
        Ok(nn::from_tokens(g, out, h, w))
    }
}

/// Which embedding feeds each of the two streams.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum FmInputs {
    /// Image (student) embedding into both streams.
    #[serde(rename = "I+I")]
    ImageImage,
    /// Image into the guided-filter stream, depth into the agent stream.
    #[serde(rename = "I+D")]
    ImageDepth,
    /// Depth (teacher) embedding into both streams.
    #[default]
    #[serde(rename = "D+D")]
    DepthDepth,
}

impl std::fmt::Display for FmInputs {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FmInputs::ImageImage => "I+I",
            FmInputs::ImageDepth => "I+D",
            FmInputs::DepthDepth => "D+D",
        })
    }
}

#[derive(Clone, Debug)]
pub struct FmConfig {
    pub embed: usize,
    pub k: usize,
    pub gf_radius: usize,
    pub gf_eps: f64,
    pub n_agents: usize,
}

#[derive(Clone, Debug)]
pub struct Fm {
    pub bc1: Bcm,
    pub bc2: Bcm,
    pub agent: AgentAttention,
    pub jm_bc: Bcm,
    pub jm_agent: AgentAttention,
    pub head: Conv2d,
    pub cfg: FmConfig,
}

impl Fm {
    pub fn new(b: &mut ParamBuilder, cfg: FmConfig) -> Self {
        let g = ParamGroup::Fm;
        let (e, k) = (cfg.embed, cfg.k);
        Self {
            bc1: Bcm::new(b, "fm.bc1", g, e + k, e, e),
            bc2: Bcm::new(b, "fm.bc2", g, e + k, e, e),
            agent: AgentAttention::new(b, "fm.agent", g, e, cfg.n_agents),
            jm_bc: Bcm::new(b, "fm.jm.bc", g, e, e, e),
            jm_agent: AgentAttention::new(b, "fm.jm.agent", g, e, cfg.n_agents),
            head: Conv2d::with_init(b, "fm.jm.head", g, e, 1, ConvGeom::pointwise(), Init::Normal(HEAD_STD)),
            cfg,
        }
    }

    /// `JM(bc1(GF(R₁)) + agent(bc2(R₂)))` upsampled to `out_size`. `R` is
    /// built once per distinct stream input.
    pub fn forward(&self, g: &mut Graph, stream1: Var, stream2: Var, pred_sam: Var, out_size: usize) -> Result<Var> {
        let s = g.shape(stream1)[1];
        let r1 = reverse_and_nest(g, stream1, pred_sam, self.cfg.k)?;
        let r2 = if stream2 == stream1 { r1 } else { reverse_and_nest(g, stream2, pred_sam, self.cfg.k)? };
        let f = guided_filter(g, r1, self.cfg.gf_radius, self.cfg.gf_eps)?;
        let s1 = self.bc1.forward(g, f, s)?;
        let b2 = self.bc2.forward(g, r2, s)?;
        let s2 = self.agent.forward(g, b2)?;
        let mixed = g.add(s1, s2);
        let j = self.jm_bc.forward(g, mixed, s)?;
        let j = self.jm_agent.forward(g, j)?;
        let logits = self.head.forward(g, j);
        Ok(g.resize(logits, out_size, out_size))
    }
}
