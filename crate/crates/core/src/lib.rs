//! Uncertainty-aware macro-micro weakly-supervised segmentation.
//!
//! Two small encoder-decoder models cooperate: the micro model is trained on a
//! handful of fully-annotated images and the macro model on many
//! scribble-annotated ones. In a second, joint stage the micro model's
//! Monte-Carlo-dropout uncertainty gates a KL distillation loss that updates
//! the macro model, while an uncertainty-adaptive exponential moving average
//! of parameters flows macro knowledge back into the micro model.
//!
//! The crate is IO-free: synthetic data generation, the backbone network with
//! hand-written backpropagation, the loss/uncertainty/EMA math, metrics and
//! the two-stage trainer all operate on in-memory arrays. File formats, the
//! CLI and plotting live in the companion `uamm-cli` crate.

pub mod backbone;
pub mod config;
pub mod datagen;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod num;
pub mod rng;
pub mod trainer;
pub mod uema;
pub mod uncertainty;

pub use backbone::{ArchSpec, Backbone, ParamVector};
pub use config::ExperimentConfig;
pub use datagen::{DatasetSplit, ImageSample};
pub use error::{Error, Result};
pub use num::Real;
