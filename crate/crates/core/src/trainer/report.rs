use serde::{Deserialize, Serialize};

use super::config::{Mode, TrainingConfig};
use crate::metrics::ClusteringScores;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    AlignedThreshold,
    MaxRounds,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub n: usize,
    pub dims: Vec<usize>,
    pub has_labels: bool,
}

/// State of the model at one target update, before the fine-tuning it
/// starts (if any).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub round: usize,
    pub aligned_rate: f64,
    /// Mean over view pairs of `(1 / NK) sum_ij |q_ij^a - q_ij^b|`; 0 for one view.
    pub view_disagreement: f64,
    /// Full-dataset `KL(P || Q^v)` per view.
    pub clustering_loss: Vec<f64>,
    /// Full-dataset reconstruction loss per view, divided by N.
    pub reconstruction_loss: Vec<f64>,
    /// k-means objective on the global features (unified-target modes).
    pub target_inertia: Option<f64>,
    /// Mean distance between matched global centroids of this and the
    /// previous target update.
    pub centroid_drift: Option<f64>,
    /// Clusters whose target frequency had to be clamped.
    pub clamped_clusters: usize,
    pub per_view_scores: Option<Vec<ClusteringScores>>,
    pub consensus_scores: Option<ClusteringScores>,
}

/// One fine-tuning round between two target updates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Aligned rate at the target update that started this round.
    pub aligned_rate: f64,
    pub batches: usize,
    /// Mean reconstruction loss per example over the round, per view.
    pub reconstruction_loss: Vec<f64>,
    /// Mean clustering loss per example over the round, per view.
    pub clustering_loss: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalResult {
    pub aligned_rate: f64,
    pub per_view_scores: Option<Vec<ClusteringScores>>,
    pub consensus_scores: Option<ClusteringScores>,
}

/// Wall-clock measurements, kept apart from everything else so reports can
/// be compared for determinism without them.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub pretrain_seconds: f64,
    pub target_seconds: Vec<f64>,
    pub finetune_seconds: Vec<f64>,
    pub total_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub mode: Mode,
    /// How the mode was realized, when that involves a modelling choice.
    pub interpretation: Option<String>,
    pub config: TrainingConfig,
    pub dataset: DatasetSummary,
    /// Mean reconstruction loss of the last pretraining epoch, per view.
    pub pretrain_loss: Vec<f64>,
    pub checkpoints: Vec<Checkpoint>,
    pub rounds: Vec<RoundRecord>,
    pub final_result: Option<FinalResult>,
    pub stop_reason: Option<StopReason>,
    pub incomplete: bool,
    pub warnings: Vec<String>,
    pub timing: Timing,
}

impl RunReport {
    pub fn new(config: &TrainingConfig, dataset: DatasetSummary) -> Self {
        RunReport {
            schema_version: REPORT_SCHEMA_VERSION,
            mode: config.mode,
            interpretation: interpretation(config.mode),
            config: config.clone(),
            dataset,
            pretrain_loss: Vec::new(),
            checkpoints: Vec::new(),
            rounds: Vec::new(),
            final_result: None,
            stop_reason: None,
            incomplete: true,
            warnings: Vec::new(),
            timing: Timing::default(),
        }
    }

    pub fn rounds_executed(&self) -> usize {
        self.rounds.len()
    }

    pub fn aligned_rates(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.aligned_rate).collect()
    }

    /// JSON with the timing block zeroed, for determinism comparisons.
    pub fn to_json_without_timing(&self) -> serde_json::Result<String> {
        let mut copy = self.clone();
        copy.timing = Timing::default();
        serde_json::to_string_pretty(&copy)
    }
}

fn interpretation(mode: Mode) -> Option<String> {
    let text = match mode {
        Mode::Sdmvc => return None,
        Mode::IdecPerView => {
            "each view trains alone against the sharpening of its own soft assignments; \
             runs the full round budget"
        }
        Mode::NoUtd => {
            "views train as idec_per_view; the view-averaged consensus is used only for the final prediction"
        }
        Mode::NoSsm => {
            "one shared target built once by k-means on the min-max scaled raw features of all views, \
             never refreshed from the learned embeddings"
        }
    };
    Some(text.to_string())
}
