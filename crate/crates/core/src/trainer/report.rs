//! Run records: per-epoch rows, the full training report, and the
//! deterministic run summary (no wall-clock fields) used for reproducibility
//! checks.

use serde::{Deserialize, Serialize};

/// Per-foreground-class Dice/ADB plus their macro-averages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    /// Dice per foreground class (class index 1 upward), 0..100.
    pub dice_per_class: Vec<f64>,
    /// Boundary distance per foreground class, in `pixel_size` units.
    pub adb_per_class: Vec<f64>,
    pub avg_dice: f64,
    pub avg_adb: f64,
}

/// Training phase an epoch row belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Stage1Micro,
    Stage1Macro,
    Stage2,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Stage1Micro => "stage1_micro",
            Phase::Stage1Macro => "stage1_macro",
            Phase::Stage2 => "stage2",
        }
    }
}

/// One row per completed epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub phase: Phase,
    /// Epoch index within the phase, starting at 0.
    pub epoch: usize,
    /// Learning rate at the first step of the epoch.
    pub lr: f64,
    pub micro_loss: Option<f64>,
    pub macro_loss: Option<f64>,
    pub macro_pce: Option<f64>,
    pub macro_kl: Option<f64>,
    pub alpha_mean: Option<f64>,
    pub val_micro: Option<EvalMetrics>,
    pub val_macro: Option<EvalMetrics>,
}

/// Which model a run designates as its prediction output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelRole {
    Micro,
    Macro,
}

/// Full training record of one experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub rows: Vec<EpochRow>,
    /// Blend rate recorded at every stage-2 step.
    pub alpha_history: Vec<f64>,
    pub wall_clock_secs: f64,
    pub test_micro: Option<EvalMetrics>,
    pub test_macro: Option<EvalMetrics>,
    /// Best micro validation average Dice seen, with the phase and epoch it
    /// occurred at.
    pub best_micro_val: Option<(f64, Phase, usize)>,
}

/// Deterministic summary of one run: everything here is a pure function of
/// the config, so two runs with identical configs serialize identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    /// (full_fraction, weak_fraction) of the training pool.
    pub composition: (f64, f64),
    /// Unit of the ADB values below.
    pub pixel_size: f64,
    pub deliverable: ModelRole,
    pub test_deliverable: EvalMetrics,
    pub test_micro: EvalMetrics,
    pub test_macro: Option<EvalMetrics>,
    pub mean_alpha: Option<f64>,
}
