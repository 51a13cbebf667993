//! Depth-aware promptable segmentation for RGB-D camouflaged object detection.
//!
//! A box-prompted segmenter whose dense prompt is enriched with depth
//! (distilled into the image branch, plus wavelet edge detail) and whose
//! first-stage mask is refined by a dual-stream module that looks at the
//! regions the first stage missed. Everything runs on a small f64
//! reverse-mode autodiff engine so gradients can be checked numerically.
//!
//! - [`data`]: dataset layout, preprocessing, box prompts, synthetic scenes
//! - [`encoders`]: frozen encoder, student pyramid, prompt encoder, mask decoder
//! - [`pdm`]: distillation, wavelet detail and prompt fusion
//! - [`fm`]: mask reversion, guided filter, agent attention, joint mining
//! - [`loss`]: fusion and the training objective
//! - [`harness`]: train / evaluate / ablate / checkpoints / reports

pub mod autograd;
pub mod data;
pub mod encoders;
mod error;
pub mod fm;
pub mod harness;
pub mod kernels;
pub mod loss;
pub mod model;
pub mod nn;
pub mod parallel;
pub mod params;
pub mod pdm;
pub mod tensor;

pub use dsam_metrics as metrics;
pub use error::{Error, Result};
pub use model::{Dsam, ModelConfig, Variant};
pub use parallel::Exec;
pub use tensor::Tensor;
