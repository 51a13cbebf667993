//! Full model assembly: encoders → depth-aware prompt → decoder → finer
//! module → fusion, for the four ablation variants.

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::data::{check_size, BoxPrompt, Sample};
use crate::encoders::{FrozenEncoder, MaskDecoder, PromptEncoder, StudentEncoder, PATCH};
use crate::fm::{Fm, FmConfig, FmInputs, SEGMENTS};
use crate::loss::{dice_ce_loss, fuse_predictions, total_loss, LossWeights};
use crate::params::{ParamBuilder, ParamStore};
use crate::pdm::Pdm;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Module ablation variants.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Decoder only.
    M1,
    /// Decoder + depth-aware prompt.
    M2,
    /// Decoder + finer module.
    M3,
    /// Both modules.
    #[default]
    M4,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::M1, Variant::M2, Variant::M3, Variant::M4];

    pub fn has_pdm(self) -> bool {
        matches!(self, Variant::M2 | Variant::M4)
    }

    pub fn has_fm(self) -> bool {
        matches!(self, Variant::M3 | Variant::M4)
    }
}

/// Which prediction the segmentation loss supervises.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossTarget {
    #[default]
    Final,
    Sam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub image_size: usize,
    pub embed_dim: usize,
    pub k: usize,
    pub temperature: f64,
    pub gf_radius: usize,
    pub gf_eps: f64,
    pub n_agents: usize,
    pub variant: Variant,
    pub fm_inputs: FmInputs,
    pub loss_on: LossTarget,
    pub weights: LossWeights,
}

impl ModelConfig {
    pub fn grid(&self) -> usize {
        self.image_size / PATCH
    }

    pub fn validate(&self) -> Result<()> {
        check_size(self.image_size)?;
        let e = self.embed_dim;
        if e == 0 || e % 4 != 0 {
            return Err(Error::BadConfig(format!("embed_dim must be a positive multiple of 4, got {e}")));
        }
        if !SEGMENTS.contains(&self.k) {
            return Err(Error::BadConfig(format!("k must be one of {SEGMENTS:?}, got {}", self.k)));
        }
        if e % self.k != 0 {
            return Err(Error::BadSegments { channels: e, k: self.k });
        }
        if self.temperature <= 0.0 || self.gf_eps <= 0.0 {
            return Err(Error::BadConfig("temperature and gf_eps must be positive".into()));
        }
        let s = self.grid();
        if self.gf_radius == 0 || 2 * self.gf_radius + 1 > s {
            return Err(Error::BadRadius { radius: self.gf_radius, size: s });
        }
        let (ah, aw) = crate::fm::agent_grid(self.n_agents);
        if self.n_agents == 0 || ah > s || aw > s {
            return Err(Error::BadConfig(format!("{} agents do not fit a {s}x{s} grid", self.n_agents)));
        }
        for (name, v) in [("alpha", self.weights.alpha), ("beta", self.weights.beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::BadConfig(format!("{name} must lie in [0,1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Per-sample outputs of the frozen networks, computed once and reused.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenFeatures {
    pub em_t: Tensor,
    pub img_emb: Tensor,
}

#[derive(Clone, Copy, Debug)]
pub struct Forward {
    pub pred_sam: Var,
    pub pred_fm: Option<Var>,
    pub pred_final: Var,
    pub em_s: Option<Var>,
    pub loss_kd: Option<Var>,
    pub prompt_depth: Option<Var>,
}

#[derive(Clone, Copy, Debug)]
pub struct Losses {
    pub total: Var,
    pub sam: Var,
    pub kd: Option<Var>,
}

#[derive(Clone, Debug)]
pub struct Dsam {
    pub cfg: ModelConfig,
    pub frozen: FrozenEncoder,
    pub student: StudentEncoder,
    pub prompt: PromptEncoder,
    pub decoder: MaskDecoder,
    pub pdm: Pdm,
    pub fm: Fm,
    dense_pe: Tensor,
}

impl Dsam {
    /// Builds every sub-network (all variants share one parameter layout).
    pub fn build(cfg: ModelConfig, seed: u64) -> Result<(ParamStore, Dsam)> {
        cfg.validate()?;
        let mut store = ParamStore::default();
        let mut b = ParamBuilder::new(&mut store, seed);
        let e = cfg.embed_dim;
        let frozen = FrozenEncoder::new(&mut b, e);
        let prompt = PromptEncoder::new(&mut b, e);
        let student = StudentEncoder::new(&mut b, e);
        let pdm = Pdm::new(&mut b, e);
        let decoder = MaskDecoder::new(&mut b, e);
        let fm = Fm::new(
            &mut b,
            FmConfig { embed: e, k: cfg.k, gf_radius: cfg.gf_radius, gf_eps: cfg.gf_eps, n_agents: cfg.n_agents },
        );
        let dense_pe = prompt.dense_pe(&store, cfg.grid());
        Ok((store, Dsam { cfg, frozen, student, prompt, decoder, pdm, fm, dense_pe }))
    }

    pub fn frozen_features(&self, store: &ParamStore, s: &Sample) -> Result<FrozenFeatures> {
        self.check_sample(s)?;
        Ok(FrozenFeatures {
            em_t: self.frozen.encode_depth(store, &s.depth)?,
            img_emb: self.frozen.encode_image(store, &s.image)?,
        })
    }

    fn check_sample(&self, s: &Sample) -> Result<()> {
        let n = self.cfg.image_size;
        if s.size() != (n, n) {
            return Err(Error::BadConfig(format!("sample `{}` is {:?}, model expects {n}x{n}", s.id, s.size())));
        }
        Ok(())
    }

    /// Runs the configured variant on one preprocessed image.
    pub fn forward(&self, g: &mut Graph, image: &Tensor, frozen: &FrozenFeatures, bbox: &BoxPrompt) -> Result<Forward> {
        let cfg = &self.cfg;
        let tokens = self.prompt.encode_box(g.store(), bbox, cfg.image_size)?.tokens;
        let em_b = g.input(tokens);
        let em_t = g.input(frozen.em_t.clone());
        let img_emb = g.input(frozen.img_emb.clone());
        let pe = g.input(self.dense_pe.clone());

        let needs_student = cfg.variant.has_pdm() || (cfg.variant.has_fm() && cfg.fm_inputs != FmInputs::DepthDepth);
        let (mut em_s, mut loss_kd, mut prompt_depth) = (None, None, None);
        if needs_student {
            let x = g.input(image.clone());
            let pyramid = self.student.forward(g, x)?;
            if cfg.variant.has_pdm() {
                let out = self.pdm.forward(g, pyramid.em_i, em_t, em_b, cfg.temperature)?;
                (em_s, loss_kd, prompt_depth) = (Some(out.em_s), Some(out.loss_kd), Some(out.prompt_depth));
            } else {
                em_s = Some(self.pdm.bcm.forward(g, pyramid.em_i, cfg.grid())?);
            }
        }

        let pred_sam = self.decoder.forward(g, img_emb, em_b, prompt_depth, pe)?;
        let (pred_fm, pred_final) = if cfg.variant.has_fm() {
            let image_stream = em_s.unwrap_or(em_t);
            let (s1, s2) = match cfg.fm_inputs {
                FmInputs::ImageImage => (image_stream, image_stream),
                FmInputs::ImageDepth => (image_stream, em_t),
                FmInputs::DepthDepth => (em_t, em_t),
            };
            let pred_fm = self.fm.forward(g, s1, s2, pred_sam, cfg.image_size)?;
            (Some(pred_fm), fuse_predictions(g, pred_fm, pred_sam, cfg.weights.alpha)?)
        } else {
            (None, pred_sam)
        };
        Ok(Forward { pred_sam, pred_fm, pred_final, em_s, loss_kd, prompt_depth })
    }

    pub fn losses(&self, g: &mut Graph, out: &Forward, gt: &Tensor) -> Result<Losses> {
        let target = match self.cfg.loss_on {
            LossTarget::Final => out.pred_final,
            LossTarget::Sam => out.pred_sam,
        };
        let sam = dice_ce_loss(g, target, gt, &self.cfg.weights)?;
        let total = total_loss(g, sam, out.loss_kd, self.cfg.weights.beta)?;
        Ok(Losses { total, sam, kd: out.loss_kd })
    }

    /// Final logits `[1, H, W]` for one sample in inference mode, using its GT-derived box.
    pub fn predict(&self, store: &ParamStore, s: &Sample, frozen: &FrozenFeatures) -> Result<Tensor> {
        let mut g = Graph::inference(store);
        let out = self.forward(&mut g, &s.image, frozen, &s.bbox)?;
        Ok(g.value(out.pred_final).clone())
    }
}
