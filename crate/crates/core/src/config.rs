//! Declarative description of one training run. The config is fully
//! serializable; the CLI hashes its canonical serialization to key run
//! directories, so field order and defaults are part of the contract.

use serde::{Deserialize, Serialize};

use crate::backbone::ArchSpec;
use crate::error::{Error, Result};

/// Synthetic dataset parameters plus the annotation composition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    /// Number of scenes when generating in-process (the grid and tests).
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub num_classes: usize,
    pub stroke_fraction: f64,
    pub background_strokes: bool,
    /// Fraction of the training pool that keeps its full annotation.
    pub full_fraction: f64,
    /// Random horizontal flip of training batches.
    pub hflip_augment: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            count: 300,
            height: 60,
            width: 128,
            num_classes: 3,
            stroke_fraction: 0.05,
            background_strokes: true,
            full_fraction: 0.01,
            hflip_augment: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub cosine_decay: bool,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            learning_rate: 0.01,
            weight_decay: 0.0005,
            momentum: 0.9,
            cosine_decay: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSchedule {
    pub batch_size: usize,
    /// Stage-1 epochs for the micro model (its pool is tiny, so it needs far
    /// more epochs than the macro model for the same number of steps).
    pub stage1_micro_epochs: usize,
    pub stage1_macro_epochs: usize,
    pub stage2_epochs: usize,
    /// Validate every N epochs; 0 validates only at stage boundaries.
    pub val_every: usize,
    pub uema_every_n_steps: usize,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            batch_size: 4,
            stage1_micro_epochs: 300,
            stage1_macro_epochs: 25,
            stage2_epochs: 15,
            val_every: 5,
            uema_every_n_steps: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UncertaintyConfig {
    /// Reliability threshold tau.
    pub tau: f64,
    /// Monte-Carlo forward passes per estimate.
    pub mc_samples: usize,
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        UncertaintyConfig {
            tau: 0.5,
            mc_samples: 8,
        }
    }
}

/// Module toggles mirroring the ablation table rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    /// Train a macro model at all (off = micro-only baseline).
    pub use_macro: bool,
    /// Stage-2 KL guidance from the micro model into the macro model.
    pub use_macro_flow: bool,
    /// Stage-2 parameter moving average from the macro model into the micro
    /// model.
    pub use_micro_flow: bool,
    /// Replace the adaptive blend rate with a fixed one (the "without
    /// uncertainty assistance" EMA variant).
    pub fixed_alpha: Option<f64>,
    /// Drop the uncertainty mask from the KL loss (plain distillation).
    pub no_uncertainty_kl: bool,
    /// Keep the partial cross-entropy term active during stage 2.
    pub stage2_keep_pce: bool,
    /// Also fine-tune the micro model on the full-annotation pool during
    /// stage 2 (off by default: the micro model only moves via the EMA).
    pub stage2_micro_grad: bool,
    /// Scale the raw uncertainty by its analytic maximum (1/4) before
    /// thresholding, so tau = 0.5 selects a meaningful pixel subset.
    pub normalize_uncertainty: bool,
    /// Weight of the KL term in the stage-2 macro loss.
    pub lambda_kl: f64,
}

impl Default for AblationFlags {
    fn default() -> Self {
        AblationFlags {
            use_macro: true,
            use_macro_flow: true,
            use_micro_flow: true,
            fixed_alpha: None,
            no_uncertainty_kl: false,
            stage2_keep_pce: true,
            stage2_micro_grad: false,
            normalize_uncertainty: true,
            lambda_kl: 1.0,
        }
    }
}

impl AblationFlags {
    pub fn validate(&self) -> Result<()> {
        if self.use_macro_flow && !self.use_macro {
            return Err(Error::arg("macro flow requires the macro model"));
        }
        if self.use_micro_flow && !self.use_macro {
            return Err(Error::arg("micro flow requires the macro model"));
        }
        if let Some(alpha) = self.fixed_alpha {
            if !self.use_micro_flow {
                return Err(Error::arg("fixed_alpha implies use_micro_flow"));
            }
            if !(0.0..=1.0).contains(&alpha) {
                return Err(Error::arg(format!(
                    "fixed_alpha must lie in [0, 1], got {alpha}"
                )));
            }
        }
        if self.lambda_kl < 0.0 {
            return Err(Error::arg("lambda_kl must be nonnegative"));
        }
        Ok(())
    }
}

/// Full declarative description of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub backbone: ArchSpec,
    pub optim: OptimConfig,
    pub train: TrainSchedule,
    pub uncertainty: UncertaintyConfig,
    pub flags: AblationFlags,
    /// Physical size of one pixel; metrics report boundary distances in this
    /// unit (1.0 = plain pixels on synthetic data).
    pub pixel_size: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            data: DataConfig::default(),
            backbone: ArchSpec::default(),
            optim: OptimConfig::default(),
            train: TrainSchedule::default(),
            uncertainty: UncertaintyConfig::default(),
            flags: AblationFlags::default(),
            pixel_size: 1.0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        self.flags.validate()?;
        if self.backbone.num_classes != self.data.num_classes {
            return Err(Error::arg(format!(
                "backbone has {} classes but data has {}",
                self.backbone.num_classes, self.data.num_classes
            )));
        }
        if self.train.batch_size == 0 {
            return Err(Error::arg("batch_size must be positive"));
        }
        if self.train.uema_every_n_steps == 0 {
            return Err(Error::arg("uema_every_n_steps must be positive"));
        }
        if self.optim.learning_rate <= 0.0 {
            return Err(Error::arg("learning_rate must be positive"));
        }
        if self.optim.momentum < 0.0 || self.optim.momentum >= 1.0 {
            return Err(Error::arg("momentum must lie in [0, 1)"));
        }
        if self.optim.weight_decay < 0.0 {
            return Err(Error::arg("weight_decay must be nonnegative"));
        }
        if self.uncertainty.mc_samples < 2 {
            return Err(Error::arg("mc_samples must be at least 2"));
        }
        if self.uncertainty.tau <= 0.0 {
            return Err(Error::arg("tau must be positive"));
        }
        if !(self.data.full_fraction > 0.0 && self.data.full_fraction <= 1.0) {
            return Err(Error::arg("full_fraction must lie in (0, 1]"));
        }
        if self.pixel_size <= 0.0 {
            return Err(Error::arg("pixel_size must be positive"));
        }
        Ok(())
    }

    /// The threshold actually compared against raw uncertainty values:
    /// normalization rescales tau by the analytic maximum 1/4.
    pub fn effective_tau(&self) -> f64 {
        if self.flags.normalize_uncertainty {
            self.uncertainty.tau * 0.25
        } else {
            self.uncertainty.tau
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn flag_consistency_enforced() {
        let mut cfg = ExperimentConfig::default();
        cfg.flags.use_macro = false;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.flags.fixed_alpha = Some(0.99);
        cfg.flags.use_micro_flow = false;
        cfg.flags.use_macro_flow = false;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn effective_tau_normalization() {
        let mut cfg = ExperimentConfig::default();
        assert_eq!(cfg.effective_tau(), 0.125);
        cfg.flags.normalize_uncertainty = false;
        assert_eq!(cfg.effective_tau(), 0.5);
    }

    #[test]
    fn config_roundtrips_through_serde() {
        let cfg = ExperimentConfig::default();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
    }
}
