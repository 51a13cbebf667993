//! Ablation grids: each row is the base configuration with exactly one
//! controlled field changed, trained and evaluated with the shared seed.

use std::fmt;
use std::str::FromStr;

use dsam_metrics::{MetricReport, CSV_COLUMNS};
use serde::{Deserialize, Serialize};

use crate::data::Split;
use crate::fm::{FmInputs, SEGMENTS};
use crate::harness::checkpoint::Checkpoint;
use crate::harness::config::{NamedSource, RunConfig};
use crate::harness::evaluate::evaluate;
use crate::harness::train::train_on;
use crate::model::Variant;
use crate::{Error, Result};

/// FM : SAM ratios and the weight they put on the second term.
pub const RATIOS: [(&str, f64); 4] = [("3:7", 0.7), ("2:8", 0.8), ("1:9", 0.9), ("0.5:9.5", 0.95)];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationGrid {
    /// M1–M4.
    Modules,
    /// FM segment counts.
    Layers,
    /// FM stream inputs.
    Inputs,
    /// Prediction fusion α.
    FusionRatio,
    /// Loss weight β.
    LossRatio,
}

impl AblationGrid {
    pub const ALL: [AblationGrid; 5] =
        [AblationGrid::Modules, AblationGrid::Layers, AblationGrid::Inputs, AblationGrid::FusionRatio, AblationGrid::LossRatio];

    pub fn name(self) -> &'static str {
        match self {
            AblationGrid::Modules => "modules",
            AblationGrid::Layers => "layers",
            AblationGrid::Inputs => "inputs",
            AblationGrid::FusionRatio => "fusion_ratio",
            AblationGrid::LossRatio => "loss_ratio",
        }
    }

    /// Row labels and their configurations.
    pub fn rows(self, base: &RunConfig) -> Vec<(String, RunConfig)> {
        match self {
            AblationGrid::Modules => {
                Variant::ALL.iter().map(|&v| (format!("{v:?}"), RunConfig { variant: v, ..base.clone() })).collect()
            }
            AblationGrid::Layers => SEGMENTS.iter().map(|&k| (k.to_string(), RunConfig { k, ..base.clone() })).collect(),
            AblationGrid::Inputs => [FmInputs::ImageImage, FmInputs::ImageDepth, FmInputs::DepthDepth]
                .iter()
                .map(|&f| (f.to_string(), RunConfig { fm_inputs: f, ..base.clone() }))
                .collect(),
            AblationGrid::FusionRatio => {
                RATIOS.iter().map(|&(l, a)| (l.to_string(), RunConfig { alpha: a, ..base.clone() })).collect()
            }
            AblationGrid::LossRatio => {
                RATIOS.iter().map(|&(l, b)| (l.to_string(), RunConfig { beta: b, ..base.clone() })).collect()
            }
        }
    }
}

impl fmt::Display for AblationGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::BadConfig(format!("unknown grid `{s}` (expected one of modules, layers, inputs, fusion_ratio, loss_ratio)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    /// One report per dataset, in `AblationTable::datasets` order.
    pub reports: Vec<MetricReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub grid: AblationGrid,
    pub datasets: Vec<String>,
    pub rows: Vec<TableRow>,
}

impl AblationTable {
    pub fn csv_header(&self) -> Vec<String> {
        std::iter::once("variant".to_string())
            .chain(self.datasets.iter().flat_map(|d| CSV_COLUMNS.iter().map(move |c| format!("{d}:{c}"))))
            .collect()
    }
}

fn test_sets(base: &RunConfig) -> Vec<NamedSource> {
    if base.test_data.is_empty() {
        vec![NamedSource { name: "train".into(), source: base.train_data.clone() }]
    } else {
        base.test_data.clone()
    }
}

/// Trains and evaluates every row of `grid`.
pub fn ablate(grid: AblationGrid, base: &RunConfig) -> Result<AblationTable> {
    Ok(ablate_with_checkpoints(grid, base)?.0)
}

/// As [`ablate`], also returning each row's trained checkpoint.
pub fn ablate_with_checkpoints(grid: AblationGrid, base: &RunConfig) -> Result<(AblationTable, Vec<Checkpoint>)> {
    base.validate()?;
    let train = base.train_data.load(Split::Train, base.image_size)?;
    let sets = test_sets(base);
    let tests = sets.iter().map(|s| s.source.load(Split::Test, base.image_size)).collect::<Result<Vec<_>>>()?;
    let (mut rows, mut ckpts) = (Vec::new(), Vec::new());
    for (label, cfg) in grid.rows(base) {
        let ckpt = train_on(&cfg, &train)?.checkpoint;
        let reports = tests.iter().map(|t| Ok(evaluate(&ckpt, t)?.report)).collect::<Result<Vec<_>>>()?;
        rows.push(TableRow { label, reports });
        ckpts.push(ckpt);
    }
    Ok((AblationTable { grid, datasets: sets.into_iter().map(|s| s.name).collect(), rows }, ckpts))
}
