//! `dsam` command line: train, evaluate, run ablation grids, generate
//! synthetic data. Artifacts go under `$DSAM_OUTPUT_DIR` (default `./runs`).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dsam_core::data::{save_dataset, synth_dataset, Split};
use dsam_core::harness::evaluate::write_predictions;
use dsam_core::harness::{ablate, evaluate_source, output_root, report, train, AblationGrid, Checkpoint, DataSource, RunConfig};
use dsam_core::metrics::MetricReport;
use dsam_core::{Error, Result};

#[derive(Parser)]
#[command(name = "dsam", version, about = "Depth-aware promptable camouflaged object segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a TOML config, then evaluate on its test sets.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a checkpoint on a `{Image,Depth,GT}` directory.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Also write per-sample prediction PNGs.
        #[arg(long)]
        save_predictions: bool,
    },
    /// Train and evaluate every row of an ablation grid.
    Ablate {
        /// modules | layers | inputs | fusion_ratio | loss_ratio
        #[arg(long)]
        grid: String,
        #[arg(long)]
        config: PathBuf,
    },
    /// Write a synthetic dataset.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run_dir(cfg: &RunConfig) -> PathBuf {
    output_root().join(&cfg.name)
}

fn summary(label: &str, r: &MetricReport) {
    println!(
        "{label}: S {:.4}  F_w {:.4}  F_m {:.4}  E_m {:.4}  E_x {:.4}  MAE {:.4}  (n = {})",
        r.s_alpha, r.f_beta_w, r.f_beta_m, r.e_phi_m, r.e_phi_x, r.mae, r.n_samples
    );
}

fn write_config(dir: &Path, cfg: &RunConfig) -> Result<()> {
    let path = dir.join("config.toml");
    std::fs::write(&path, cfg.to_toml()?).map_err(|e| Error::io(&path, e))
}

fn cmd_train(config: &Path) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let dir = run_dir(&cfg);
    let outcome = match train(&cfg) {
        Ok(o) => o,
        Err(Error::FailedRun { epoch, last_good }) => {
            let path = dir.join("last_good.json");
            last_good.save(&path)?;
            eprintln!("training diverged at epoch {epoch}; last good checkpoint written to {}", path.display());
            return Err(Error::FailedRun { epoch, last_good });
        }
        Err(e) => return Err(e),
    };
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_config(&dir, &cfg)?;
    outcome.checkpoint.save(&dir.join("model.json"))?;
    report::write_log(&dir, "log", &outcome.log)?;
    if let Some(last) = outcome.log.last() {
        println!("epoch {}: loss {:.5} (seg {:.5}, kd {:.5})", last.epoch, last.loss, last.loss_sam, last.loss_kd);
    }
    let sets = if cfg.test_data.is_empty() {
        vec![("train".to_string(), cfg.train_data.clone())]
    } else {
        cfg.test_data.iter().map(|s| (s.name.clone(), s.source.clone())).collect()
    };
    for (name, source) in sets {
        let ev = evaluate_source(&outcome.checkpoint, &source)?;
        report::write_evaluation(&dir, &format!("eval_{name}"), &ev)?;
        summary(&name, &ev.report);
    }
    println!("artifacts in {}", dir.display());
    Ok(())
}

fn cmd_eval(ckpt: &Path, data: &Path, save_predictions: bool) -> Result<()> {
    let ckpt = Checkpoint::load(ckpt)?;
    let ev = evaluate_source(&ckpt, &DataSource::Dir(data.to_path_buf()))?;
    let name = data.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "data".into());
    let dir = run_dir(&ckpt.config);
    report::write_evaluation(&dir, &format!("eval_{name}"), &ev)?;
    if save_predictions {
        write_predictions(&ev, &dir.join(format!("pred_{name}")))?;
    }
    summary(&name, &ev.report);
    println!("artifacts in {}", dir.display());
    Ok(())
}

fn cmd_ablate(grid: &str, config: &Path) -> Result<()> {
    let grid: AblationGrid = grid.parse()?;
    let cfg = RunConfig::load(config)?;
    let table = ablate(grid, &cfg)?;
    let dir = run_dir(&cfg);
    report::write_table(&dir, &format!("ablation_{grid}"), &table)?;
    for row in &table.rows {
        for (ds, r) in table.datasets.iter().zip(&row.reports) {
            summary(&format!("{:>8} {ds}", row.label), r);
        }
    }
    println!("artifacts in {}", dir.display());
    Ok(())
}

fn cmd_synth(n: usize, seed: u64, size: usize, out: &Path) -> Result<()> {
    dsam_core::data::check_size(size)?;
    let samples = synth_dataset(n, seed, size);
    save_dataset(out, &samples)?;
    // round-trip through the loader so a bad write fails here, not at training time
    let loaded = DataSource::Dir(out.to_path_buf()).load(Split::Train, size)?;
    println!("wrote {} samples to {}", loaded.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train { config } => cmd_train(config),
        Command::Eval { ckpt, data, save_predictions } => cmd_eval(ckpt, data, *save_predictions),
        Command::Ablate { grid, config } => cmd_ablate(grid, config),
        Command::Synth { n, seed, size, out } => cmd_synth(*n, *seed, *size, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
