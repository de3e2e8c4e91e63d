use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::plan::PlanMode;
use super::weights::WeightVector;
use super::FinalMode;
use crate::corpus::{DomainRelation, RelationCategory};
use crate::dims::Dims;
use crate::gateway::UsageRecord;
use crate::prompts::{AspectProfile, DistributionPattern, RelevanceAssessment, RobustnessScore, ScoreWithReason, StageId};

/// Per-dimension similarity with reasons.
pub type DimensionScores<T = f64> = Dims<ScoreWithReason<T>>;

impl<T: Copy> Dims<ScoreWithReason<T>> {
    pub fn values(&self) -> Dims<T> {
        self.map(|s| s.score)
    }
}

/// Notable events while scoring a pair. None of them abort the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    /// A score outside `[0, 1]` was clamped.
    ScoreClamped { node: String },
    /// A relevance or weight triple was rescaled to sum 1.
    Renormalized { node: String },
    /// The first reply did not parse and the stage was asked again.
    Reprompted { node: String },
    /// The integration stage returned all-zero weights; equal weights were used.
    EqualWeightFallback { node: String },
    /// The model's own final arithmetic disagrees with the local weighted sum.
    FinalDiscrepancy { local: f64, reported: f64 },
    /// The model's domain relation differs from the IPC rule-based label.
    RelationMismatch {
        reported: RelationCategory,
        reference: RelationCategory,
    },
}

impl Warning {
    pub fn kind(&self) -> &'static str {
        match self {
            Warning::ScoreClamped { .. } => "score_clamped",
            Warning::Renormalized { .. } => "renormalized",
            Warning::Reprompted { .. } => "reprompted",
            Warning::EqualWeightFallback { .. } => "equal_weight_fallback",
            Warning::FinalDiscrepancy { .. } => "final_discrepancy",
            Warning::RelationMismatch { .. } => "relation_mismatch",
        }
    }
}

/// One executed call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeTrace {
    pub stage: StageId,
    /// 1, or 2 after a format re-prompt.
    pub attempts: u32,
    pub cached: bool,
    pub usage: UsageRecord,
    /// Reply text of the last attempt.
    pub response: String,
}

/// Everything the graph produced for one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityResult<T = f64> {
    pub pair_id: String,
    pub plan: PlanMode,
    pub final_mode: FinalMode,
    pub profile_a: AspectProfile,
    pub profile_b: AspectProfile,
    pub scores: DimensionScores<T>,
    pub relation: DomainRelation,
    /// Label from the deterministic IPC rules, for comparison with `relation`.
    pub ipc_relation: DomainRelation,
    pub pattern: DistributionPattern,
    pub relevance: RelevanceAssessment<T>,
    pub robustness: RobustnessScore<T>,
    pub weights: WeightVector<T>,
    /// Unrounded `w·S`.
    pub weighted_sum: T,
    /// `w·S` rounded to three decimals.
    pub final_score: T,
    /// Score the model computed itself, when the final stage was run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reported_final: Option<T>,
    pub usage: UsageRecord,
    pub warnings: Vec<Warning>,
    pub trace: BTreeMap<String, NodeTrace>,
}

/// Output of a plan cut down to extraction and similarity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionRun<T = f64> {
    pub pair_id: String,
    pub profile_a: AspectProfile,
    pub profile_b: AspectProfile,
    pub scores: DimensionScores<T>,
    pub usage: UsageRecord,
    pub warnings: Vec<Warning>,
    pub trace: BTreeMap<String, NodeTrace>,
}
