//! Experiment orchestration: configuration, training, evaluation, ablation
//! grids, checkpoints and report files.

pub mod ablation;
pub mod checkpoint;
pub mod config;
pub mod evaluate;
pub mod report;
pub mod train;

pub use ablation::{ablate, ablate_with_checkpoints, AblationGrid, AblationTable, TableRow};
pub use checkpoint::{load_external_weights, Checkpoint};
pub use config::{DataSource, EvalNorm, NamedSource, RunConfig};
pub use evaluate::{evaluate, evaluate_model, evaluate_source, Evaluation, SampleScore};
pub use report::{output_root, OUTPUT_DIR_ENV};
pub use train::{train, train_on, Adam, EpochLog, TrainOutcome};
