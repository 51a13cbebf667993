//! Run configuration, loadable from TOML (keys are the field names).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{self, DatasetSpec, Sample, Split};
use crate::fm::FmInputs;
use crate::loss::LossWeights;
use crate::model::{LossTarget, ModelConfig, Variant};
use crate::parallel::Exec;
use crate::{Error, Result};

/// Where samples come from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// A `root/{Image,Depth,GT}` directory.
    Dir(PathBuf),
    /// Generated scenes.
    Synth { n: usize, seed: u64 },
}

impl DataSource {
    /// Raw samples (not yet preprocessed).
    pub fn load(&self, split: Split, size_hint: usize) -> Result<Vec<Sample>> {
        match self {
            DataSource::Dir(root) => DatasetSpec::new(root, split).load_all(),
            DataSource::Synth { n, seed } => Ok(data::synth_dataset(*n, *seed, size_hint)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedSource {
    pub name: String,
    pub source: DataSource,
}

/// How logits become maps for the metrics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalNorm {
    /// Sigmoid, then per-image min-max stretch.
    #[default]
    MinMax,
    Sigmoid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub image_size: usize,
    pub embed_dim: usize,
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub dice_weight: f64,
    pub ce_weight: f64,
    pub temperature: f64,
    pub gf_radius: usize,
    pub gf_eps: f64,
    pub n_agents: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Box jitter fraction applied to training prompts.
    pub jitter: f64,
    pub variant: Variant,
    pub fm_inputs: FmInputs,
    pub loss_on: LossTarget,
    pub eval_norm: EvalNorm,
    pub exec: Exec,
    pub train_data: DataSource,
    /// Evaluation sets; empty means "evaluate on the training set".
    pub test_data: Vec<NamedSource>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl RunConfig {
    /// Laptop-scale profile: 64 px, 32 channels, 8 synthetic scenes, 200 steps.
    pub fn desk() -> Self {
        Self {
            name: "desk".into(),
            image_size: 64,
            embed_dim: 32,
            k: 8,
            alpha: 0.9,
            beta: 0.9,
            dice_weight: 1.0,
            ce_weight: 1.0,
            temperature: 4.0,
            gf_radius: 2,
            gf_eps: 1e-2,
            n_agents: 16,
            lr: 2e-3,
            epochs: 200,
            batch_size: 8,
            seed: 0,
            jitter: 0.0,
            variant: Variant::M4,
            fm_inputs: FmInputs::DepthDepth,
            loss_on: LossTarget::Final,
            eval_norm: EvalNorm::MinMax,
            exec: Exec::Parallel,
            train_data: DataSource::Synth { n: 8, seed: 0 },
            test_data: Vec::new(),
        }
    }

    /// Full-resolution schedule (needs real data and a lot of compute).
    pub fn full() -> Self {
        Self {
            name: "full".into(),
            image_size: 1024,
            embed_dim: 256,
            lr: 1e-5,
            epochs: 100,
            batch_size: 8,
            jitter: 0.1,
            ..Self::desk()
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            image_size: self.image_size,
            embed_dim: self.embed_dim,
            k: self.k,
            temperature: self.temperature,
            gf_radius: self.gf_radius,
            gf_eps: self.gf_eps,
            n_agents: self.n_agents,
            variant: self.variant,
            fm_inputs: self.fm_inputs,
            loss_on: self.loss_on,
            weights: LossWeights {
                alpha: self.alpha,
                beta: self.beta,
                dice_weight: self.dice_weight,
                ce_weight: self.ce_weight,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::BadConfig(format!("lr must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::BadConfig("batch_size must be at least 1".into()));
        }
        if !(0.0..0.5).contains(&self.jitter) {
            return Err(Error::BadConfig(format!("jitter must lie in [0, 0.5), got {}", self.jitter)));
        }
        self.model_config().validate()
    }

    /// sha256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(bytes))
    }
}
