//! Training loop: per-sample forward/backward (optionally in parallel),
//! gradients reduced in sample order, Adam on trainable groups only.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Graph;
use crate::data::{derive_box_prompt, preprocess, Sample, Split};
use crate::harness::checkpoint::Checkpoint;
use crate::harness::config::RunConfig;
use crate::model::{Dsam, FrozenFeatures};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub loss_sam: f64,
    pub loss_kd: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    moments: HashMap<ParamId, (Tensor, Tensor)>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, moments: HashMap::new() }
    }

    /// Applies one update; parameters without a gradient are left untouched.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[(ParamId, Tensor)]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (id, g) in grads {
            assert!(!store.get(*id).group().frozen(), "optimizer touched a frozen parameter");
            let (m, v) = self
                .moments
                .entry(*id)
                .or_insert_with(|| (Tensor::zeros(g.shape()), Tensor::zeros(g.shape())));
            let p = store.value_mut(*id);
            for (((p, m), v), g) in p.data_mut().iter_mut().zip(m.data_mut()).zip(v.data_mut()).zip(g.data()) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            }
        }
    }
}

/// Preprocessed samples plus their cached frozen features.
pub struct Prepared {
    pub samples: Vec<Sample>,
    pub frozen: Vec<FrozenFeatures>,
}

pub fn prepare(model: &Dsam, store: &ParamStore, raw: &[Sample], cfg: &RunConfig) -> Result<Prepared> {
    let samples: Vec<Sample> = raw.iter().map(|s| preprocess(s, cfg.image_size)).collect::<Result<_>>()?;
    let frozen = cfg
        .exec
        .map(samples.len(), |i| model.frozen_features(store, &samples[i]))
        .into_iter()
        .collect::<Result<_>>()?;
    Ok(Prepared { samples, frozen })
}

/// Per-sample jitter stream derived from `(seed, epoch, index)`.
fn jitter_rng(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6a09_e667_f3bc_c908);
    rng.set_stream(((epoch as u64) << 32) | index as u64);
    rng
}

struct SampleStep {
    loss: f64,
    loss_sam: f64,
    loss_kd: f64,
    grads: HashMap<ParamId, Tensor>,
}

fn sample_step(model: &Dsam, store: &ParamStore, data: &Prepared, cfg: &RunConfig, epoch: usize, i: usize) -> Result<SampleStep> {
    let s = &data.samples[i];
    let bbox = if cfg.jitter > 0.0 {
        derive_box_prompt(&s.gt_mask, cfg.jitter, Some(&mut jitter_rng(cfg.seed, epoch, i)))?
    } else {
        s.bbox
    };
    let mut g = Graph::new(store);
    let out = model.forward(&mut g, &s.image, &data.frozen[i], &bbox)?;
    let l = model.losses(&mut g, &out, &s.gt_mask)?;
    let loss = g.value(l.total).item();
    let loss_sam = g.value(l.sam).item();
    let loss_kd = l.kd.map_or(0.0, |kd| g.value(kd).item());
    let grads = g.backward(l.total).into_params();
    Ok(SampleStep { loss, loss_sam, loss_kd, grads })
}

/// Trains from scratch on the configured training source.
pub fn train(cfg: &RunConfig) -> Result<TrainOutcome> {
    let raw = cfg.train_data.load(Split::Train, cfg.image_size)?;
    train_on(cfg, &raw)
}

pub fn train_on(cfg: &RunConfig, raw: &[Sample]) -> Result<TrainOutcome> {
    cfg.validate()?;
    if raw.is_empty() {
        return Err(Error::BadConfig("training set is empty".into()));
    }
    let (mut store, model) = Dsam::build(cfg.model_config(), cfg.seed)?;
    let data = prepare(&model, &store, raw, cfg)?;
    let mut adam = Adam::new(cfg.lr);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..data.samples.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut last_good = Checkpoint::capture(cfg, &store);
    for epoch in 0..cfg.epochs {
        if cfg.batch_size < order.len() {
            order.shuffle(&mut shuffle_rng);
        }
        let (mut sum, mut sum_sam, mut sum_kd) = (0.0, 0.0, 0.0);
        for batch in order.chunks(cfg.batch_size) {
            let steps = cfg.exec.map(batch.len(), |j| sample_step(&model, &store, &data, cfg, epoch, batch[j]));
            let mut total: HashMap<ParamId, Tensor> = HashMap::new();
            for step in steps {
                let step = step?;
                if !step.loss.is_finite() {
                    return Err(Error::FailedRun { epoch, last_good: Box::new(last_good) });
                }
                sum += step.loss;
                sum_sam += step.loss_sam;
                sum_kd += step.loss_kd;
                // reduce in sample order for bit-reproducibility
                let mut ids: Vec<_> = step.grads.into_iter().collect();
                ids.sort_by_key(|(id, _)| *id);
                for (id, g) in ids {
                    match total.get_mut(&id) {
                        Some(acc) => acc.add_assign(&g),
                        None => {
                            total.insert(id, g);
                        }
                    }
                }
            }
            let mut grads: Vec<(ParamId, Tensor)> = total.into_iter().collect();
            grads.sort_by_key(|(id, _)| *id);
            let scale = 1.0 / batch.len() as f64;
            for (_, g) in grads.iter_mut() {
                g.scale_assign(scale);
            }
            adam.step(&mut store, &grads);
        }
        let n = data.samples.len() as f64;
        log.push(EpochLog { epoch, loss: sum / n, loss_sam: sum_sam / n, loss_kd: sum_kd / n });
        if store.iter().all(|(_, p)| p.value().all_finite()) {
            last_good = Checkpoint::capture(cfg, &store);
        } else {
            return Err(Error::FailedRun { epoch, last_good: Box::new(last_good) });
        }
    }
    Ok(TrainOutcome { checkpoint: last_good, log })
}
