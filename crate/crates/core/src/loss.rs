//! Prediction fusion and the training objective.

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Dice smoothing constant.
pub const DICE_SMOOTH: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Weight of the first-stage prediction in the fused logits.
    pub alpha: f64,
    /// Weight of the segmentation loss against the distillation loss.
    pub beta: f64,
    pub dice_weight: f64,
    pub ce_weight: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: 0.9, beta: 0.9, dice_weight: 1.0, ce_weight: 1.0 }
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::BadConfig(format!("{name} must lie in [0,1], got {v}")));
    }
    Ok(())
}

/// `(1 − α)·pred_fm + α·pred_sam` in logit space. The boundaries return the
/// corresponding input unchanged.
pub fn fuse_predictions(g: &mut Graph, pred_fm: Var, pred_sam: Var, alpha: f64) -> Result<Var> {
    check_unit("alpha", alpha)?;
    if g.shape(pred_fm) != g.shape(pred_sam) {
        return Err(Error::shape(format!("fusion inputs {:?} vs {:?}", g.shape(pred_fm), g.shape(pred_sam))));
    }
    if alpha == 1.0 {
        return Ok(pred_sam);
    }
    if alpha == 0.0 {
        return Ok(pred_fm);
    }
    let a = g.scale(pred_fm, 1.0 - alpha);
    let b = g.scale(pred_sam, alpha);
    Ok(g.add(a, b))
}

/// Checks that a mask is exactly {0,1}-valued.
pub fn check_binary(gt: &Tensor) -> Result<()> {
    match gt.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
        Some(&v) => Err(Error::BadMask(v)),
        None => Ok(()),
    }
}

/// Soft dice on sigmoid probabilities plus mean binary cross-entropy on logits.
pub fn dice_ce_loss(g: &mut Graph, pred: Var, gt: &Tensor, weights: &LossWeights) -> Result<Var> {
    if g.shape(pred) != gt.shape() {
        return Err(Error::shape(format!("prediction {:?} vs mask {:?}", g.shape(pred), gt.shape())));
    }
    check_binary(gt)?;
    let gv = g.input(gt.clone());
    let p = g.sigmoid(pred);
    let pg = g.mul(p, gv);
    let inter = g.sum(pg);
    let num = g.scale(inter, 2.0);
    let num = g.add_scalar(num, DICE_SMOOTH);
    let sum_p = g.sum(p);
    let den = g.add_scalar(sum_p, gt.sum() + DICE_SMOOTH);
    let ratio = g.div(num, den);
    let neg = g.scale(ratio, -weights.dice_weight);
    let dice = g.add_scalar(neg, weights.dice_weight);

    // BCE with logits: softplus(x) − g·x
    let sp = g.softplus(pred);
    let gx = g.mul(gv, pred);
    let bce = g.sub(sp, gx);
    let ce = g.mean(bce);
    let ce = g.scale(ce, weights.ce_weight);
    Ok(g.add(dice, ce))
}

/// `β·loss_sam + (1 − β)·loss_kd`; a missing distillation term counts as zero.
pub fn total_loss(g: &mut Graph, loss_sam: Var, loss_kd: Option<Var>, beta: f64) -> Result<Var> {
    check_unit("beta", beta)?;
    let Some(kd) = loss_kd.filter(|_| beta != 1.0) else {
        return Ok(if beta == 1.0 { loss_sam } else { g.scale(loss_sam, beta) });
    };
    if beta == 0.0 {
        return Ok(kd);
    }
    let a = g.scale(loss_sam, beta);
    let b = g.scale(kd, 1.0 - beta);
    Ok(g.add(a, b))
}
