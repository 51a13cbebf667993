//! Report emission: every artifact is written as JSON and CSV side by side.

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use dsam_metrics::{MetricReport, CSV_COLUMNS};
use serde::Serialize;

use crate::harness::ablation::AblationTable;
use crate::harness::evaluate::{Evaluation, SampleScore};
use crate::harness::train::EpochLog;
use crate::{Error, Result};

/// Environment variable overriding the output root.
pub const OUTPUT_DIR_ENV: &str = "DSAM_OUTPUT_DIR";

/// `$DSAM_OUTPUT_DIR`, or `./runs`.
pub fn output_root() -> PathBuf {
    env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(value)?).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(Error::from)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

#[derive(Serialize)]
struct EvalFile<'a> {
    report: &'a MetricReport,
    per_sample: &'a [SampleScore],
}

/// `<stem>.json` (mean + per-sample) and `<stem>.csv` (one row per sample, then `mean`).
pub fn write_evaluation(dir: &Path, stem: &str, eval: &Evaluation) -> Result<()> {
    ensure_dir(dir)?;
    write_json(&dir.join(format!("{stem}.json")), &EvalFile { report: &eval.report, per_sample: &eval.per_sample })?;
    let mut w = csv_writer(&dir.join(format!("{stem}.csv")))?;
    w.write_record(std::iter::once("id").chain(CSV_COLUMNS))?;
    let rows = eval.per_sample.iter().map(|s| (s.id.as_str(), &s.report)).chain([("mean", &eval.report)]);
    for (id, r) in rows {
        w.write_record(std::iter::once(id.to_string()).chain(r.table_row().map(fmt)))?;
    }
    w.flush().map_err(|e| Error::io(dir, e))
}

pub fn write_log(dir: &Path, stem: &str, log: &[EpochLog]) -> Result<()> {
    ensure_dir(dir)?;
    write_json(&dir.join(format!("{stem}.json")), log)?;
    let mut w = csv_writer(&dir.join(format!("{stem}.csv")))?;
    for e in log {
        w.serialize(e)?;
    }
    w.flush().map_err(|e| Error::io(dir, e))
}

/// Wide table: `variant,<ds>:S,<ds>:F_w,...` with one row per grid entry.
pub fn write_table(dir: &Path, stem: &str, table: &AblationTable) -> Result<()> {
    ensure_dir(dir)?;
    write_json(&dir.join(format!("{stem}.json")), table)?;
    let mut w = csv_writer(&dir.join(format!("{stem}.csv")))?;
    w.write_record(table.csv_header())?;
    for row in &table.rows {
        w.write_record(std::iter::once(row.label.clone()).chain(row.reports.iter().flat_map(|r| r.table_row().map(fmt))))?;
    }
    w.flush().map_err(|e| Error::io(dir, e))
}
