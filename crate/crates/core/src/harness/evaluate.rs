//! Evaluation: rebuild a model from a checkpoint, predict every sample with
//! its GT-derived box, and score with the metric suite.

use std::fs;
use std::path::Path;

use dsam_metrics::{evaluate_sample, MetricReport, Plane};
use image::{GrayImage, ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

use crate::autograd::sigmoid;
use crate::data::{Sample, Split};
use crate::harness::checkpoint::Checkpoint;
use crate::harness::config::{DataSource, EvalNorm, RunConfig};
use crate::harness::train::prepare;
use crate::model::Dsam;
use crate::parallel::Exec;
use crate::params::ParamStore;
use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub id: String,
    pub report: MetricReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: MetricReport,
    /// In sample-id order.
    pub per_sample: Vec<SampleScore>,
    /// Normalised `[H, W]` maps in `[0, 1]`, aligned with `per_sample`.
    pub predictions: Vec<Tensor>,
    /// Raw final logits `[1, H, W]`.
    pub logits: Vec<Tensor>,
}

/// Logits → metric-ready map.
pub fn normalise(logits: &Tensor, norm: EvalNorm) -> Tensor {
    let p = logits.map(sigmoid);
    if norm == EvalNorm::Sigmoid {
        return p;
    }
    let (lo, hi) = p.data().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi > lo {
        p.map(|v| (v - lo) / (hi - lo))
    } else {
        p
    }
}

fn plane(t: &Tensor) -> Result<Plane<'_>> {
    let s = t.shape();
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    Ok(Plane::new(t.data(), h, w)?)
}

/// Scores aligned prediction / GT maps; the mean is taken in input order.
pub fn score_maps(ids: &[String], preds: &[Tensor], gts: &[Tensor], exec: Exec) -> Result<(MetricReport, Vec<SampleScore>)> {
    if preds.len() != gts.len() || preds.len() != ids.len() || preds.is_empty() {
        return Err(Error::BadBatch(format!("{} predictions, {} masks, {} ids", preds.len(), gts.len(), ids.len())));
    }
    let per_sample = exec
        .map(preds.len(), |i| -> Result<SampleScore> {
            Ok(SampleScore { id: ids[i].clone(), report: evaluate_sample(plane(&preds[i])?, plane(&gts[i])?)? })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let reports: Vec<MetricReport> = per_sample.iter().map(|s| s.report).collect();
    Ok((MetricReport::average(&reports)?, per_sample))
}

/// Runs the checkpointed model on raw samples (preprocessed to the checkpoint's size).
pub fn evaluate(ckpt: &Checkpoint, raw: &[Sample]) -> Result<Evaluation> {
    let cfg = &ckpt.config;
    let (mut store, model) = Dsam::build(cfg.model_config(), cfg.seed)?;
    ckpt.restore(&mut store)?;
    evaluate_model(&model, &store, raw, cfg)
}

pub fn evaluate_source(ckpt: &Checkpoint, source: &DataSource) -> Result<Evaluation> {
    evaluate(ckpt, &source.load(Split::Test, ckpt.config.image_size)?)
}

/// Evaluates an already-built model; `cfg` supplies size, normalisation and executor.
pub fn evaluate_model(model: &Dsam, store: &ParamStore, raw: &[Sample], cfg: &RunConfig) -> Result<Evaluation> {
    let (norm, exec) = (cfg.eval_norm, cfg.exec);
    if raw.is_empty() {
        return Err(Error::BadConfig("evaluation set is empty".into()));
    }
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| raw[a].id.cmp(&raw[b].id));
    let raw: Vec<Sample> = order.into_iter().map(|i| raw[i].clone()).collect();
    let data = prepare(model, store, &raw, cfg)?;
    let logits = exec
        .map(data.samples.len(), |i| model.predict(store, &data.samples[i], &data.frozen[i]))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let predictions: Vec<Tensor> = logits.iter().map(|l| normalise(l, norm)).collect();
    let gts: Vec<Tensor> = data.samples.iter().map(|s| s.gt_mask.clone()).collect();
    let ids: Vec<String> = data.samples.iter().map(|s| s.id.clone()).collect();
    let (report, per_sample) = score_maps(&ids, &predictions, &gts, exec)?;
    Ok(Evaluation { report, per_sample, predictions, logits })
}

/// Writes each prediction as an 8-bit grayscale `<id>.png`.
pub fn write_predictions(eval: &Evaluation, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (s, p) in eval.per_sample.iter().zip(&eval.predictions) {
        let shape = p.shape();
        let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
        let img: GrayImage = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
            Luma([(p.data()[y as usize * w + x as usize].clamp(0.0, 1.0) * 255.0).round() as u8])
        });
        let path = dir.join(format!("{}.png", s.id));
        img.save(&path).map_err(|source| Error::Image { path, source })?;
    }
    Ok(())
}
