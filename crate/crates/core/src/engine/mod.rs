//! The multi-aspect reasoning graph: plan construction, execution and result assembly.

mod plan;
mod result;
mod run;
mod weights;

pub use plan::{build_plan, MargPlan, PlanError, PlanMode, PlanNode};
pub use result::{DimensionRun, DimensionScores, NodeTrace, SimilarityResult, Warning};
pub use run::{EngineError, EngineOptions, FinalMode, MargEngine, Sampling, StageFailure};
pub(crate) use run::ask;
pub use weights::{combine, normalize_weights, weighted_sum, WeightError, WeightVector};
