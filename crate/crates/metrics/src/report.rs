use serde::{Deserialize, Serialize};

use crate::{e_measure_suite, f_measure_suite, mae, s_measure, MetricError, Plane, Result};

/// Column order of the tabular report: structure, weighted F, mean F,
/// mean E, max E, MAE.
pub const CSV_COLUMNS: [&str; 6] = ["S", "F_w", "F_m", "E_m", "E_x", "MAE"];

/// Per-sample measures, or their arithmetic mean over a set of samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub s_alpha: f64,
    pub f_beta_w: f64,
    pub f_beta_m: f64,
    pub f_beta_mx: f64,
    pub e_phi_m: f64,
    pub e_phi_x: f64,
    pub mae: f64,
    pub n_samples: usize,
}

impl MetricReport {
    /// Values in [`CSV_COLUMNS`] order.
    pub fn table_row(&self) -> [f64; 6] {
        [self.s_alpha, self.f_beta_w, self.f_beta_m, self.e_phi_m, self.e_phi_x, self.mae]
    }

    /// Arithmetic mean of per-sample reports, weighted by their sample counts.
    pub fn average(reports: &[MetricReport]) -> Result<MetricReport> {
        let n: usize = reports.iter().map(|r| r.n_samples).sum();
        if n == 0 {
            return Err(MetricError::BadBatch { preds: 0, gts: 0 });
        }
        let mut acc = [0.0f64; 7];
        for r in reports {
            let k = r.n_samples as f64;
            let v = [r.s_alpha, r.f_beta_w, r.f_beta_m, r.f_beta_mx, r.e_phi_m, r.e_phi_x, r.mae];
            for (a, x) in acc.iter_mut().zip(v) {
                *a += k * x;
            }
        }
        let nf = n as f64;
        Ok(MetricReport {
            s_alpha: acc[0] / nf,
            f_beta_w: acc[1] / nf,
            f_beta_m: acc[2] / nf,
            f_beta_mx: acc[3] / nf,
            e_phi_m: acc[4] / nf,
            e_phi_x: acc[5] / nf,
            mae: acc[6] / nf,
            n_samples: n,
        })
    }
}

pub fn evaluate_sample(pred: Plane<'_>, gt: Plane<'_>) -> Result<MetricReport> {
    let f = f_measure_suite(pred, gt)?;
    let e = e_measure_suite(pred, gt)?;
    Ok(MetricReport {
        s_alpha: s_measure(pred, gt)?,
        f_beta_w: f.weighted,
        f_beta_m: f.adaptive,
        f_beta_mx: f.max,
        e_phi_m: e.mean,
        e_phi_x: e.max,
        mae: mae(pred, gt)?,
        n_samples: 1,
    })
}

/// Per-sample measures averaged over aligned `preds` / `gts`.
pub fn evaluate_batch(preds: &[Plane<'_>], gts: &[Plane<'_>]) -> Result<MetricReport> {
    if preds.len() != gts.len() || preds.is_empty() {
        return Err(MetricError::BadBatch { preds: preds.len(), gts: gts.len() });
    }
    let reports = preds
        .iter()
        .zip(gts)
        .map(|(p, g)| evaluate_sample(*p, *g))
        .collect::<Result<Vec<_>>>()?;
    MetricReport::average(&reports)
}
