use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{DEFAULT_EMBED_DIM, DEFAULT_HIDDEN};
use crate::target::DEFAULT_RESTARTS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Unified target from global features, shared by all views.
    #[default]
    Sdmvc,
    /// Each view self-supervises from its own sharpened assignments.
    IdecPerView,
    /// Per-view training as `IdecPerView`, consensus only at prediction time.
    NoUtd,
    /// One fixed target from the raw concatenated features.
    NoSsm,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Sdmvc, Mode::IdecPerView, Mode::NoUtd, Mode::NoSsm];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Sdmvc => "sdmvc",
            Mode::IdecPerView => "idec_per_view",
            Mode::NoUtd => "no_utd",
            Mode::NoSsm => "no_ssm",
        }
    }

    /// Whether training stops once the aligned rate exceeds the threshold.
    /// The per-view baselines have no shared objective to align on and run
    /// their full round budget.
    pub fn uses_alignment_stop(self) -> bool {
        matches!(self, Mode::Sdmvc | Mode::NoSsm)
    }

    pub fn is_baseline(self) -> bool {
        self != Mode::Sdmvc
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s.replace('-', "_"))
            .ok_or_else(|| Error::invalid(format!("unknown mode '{s}'")))
    }
}

/// Hyperparameters of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    /// Number of clusters.
    pub k: usize,
    /// Weight of the clustering loss.
    pub gamma: f64,
    pub batch_size: usize,
    pub pretrain_epochs: usize,
    /// Mini-batches between target updates.
    pub finetune_batches_per_round: usize,
    /// Stop once the aligned rate is strictly above this.
    pub aligned_stop: f64,
    pub max_rounds: usize,
    pub seed: u64,
    pub mode: Mode,
    pub learning_rate: f64,
    /// Encoder hidden widths; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    pub kmeans_restarts: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            k: 2,
            gamma: 0.1,
            batch_size: 256,
            pretrain_epochs: 500,
            finetune_batches_per_round: 1000,
            aligned_stop: 0.90,
            max_rounds: 50,
            seed: 0,
            mode: Mode::Sdmvc,
            learning_rate: 1e-3,
            hidden: DEFAULT_HIDDEN.to_vec(),
            embed_dim: DEFAULT_EMBED_DIM,
            kmeans_restarts: DEFAULT_RESTARTS,
        }
    }
}

impl TrainingConfig {
    /// Narrow network and short schedule for desk-scale synthetic data; the
    /// noisy-view benchmark trains in seconds on one core.
    pub fn desk(k: usize) -> Self {
        TrainingConfig {
            k,
            hidden: vec![64, 64, 128],
            pretrain_epochs: 50,
            finetune_batches_per_round: 25,
            max_rounds: 40,
            ..Default::default()
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let fail = |m: String| Err(Error::invalid(m));
        if self.k < 2 {
            return fail(format!("k must be at least 2, got {}", self.k));
        }
        if n < self.k {
            return fail(format!("{n} examples cannot form {} clusters", self.k));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return fail(format!("gamma must be positive, got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.aligned_stop) {
            return fail(format!("aligned_stop must lie in [0, 1], got {}", self.aligned_stop));
        }
        if self.batch_size == 0 || self.batch_size > n {
            return fail(format!("batch_size must be in 1..={n}, got {}", self.batch_size));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.embed_dim == 0 || self.hidden.contains(&0) {
            return fail("layer widths must be positive".into());
        }
        if self.kmeans_restarts == 0 {
            return fail("kmeans_restarts must be at least 1".into());
        }
        Ok(())
    }
}
