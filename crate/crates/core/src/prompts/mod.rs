//! Prompt templates for every stage and parsers for their reply formats.

mod parse;
mod stage;
mod template;

pub use parse::{
    clean, parse_category, parse_final, parse_pattern, parse_profile, parse_reasoning, parse_relevance,
    parse_robustness, parse_score_reason, parse_summary, parse_trailing_score, parse_weights, AspectProfile,
    DistributionPattern, FinalScore, PatternKind, ReasoningBundle, RelevanceAssessment, RobustnessScore,
    ScoreWithReason, SUM_TOLERANCE,
};
pub(crate) use parse::{format_relation, parse_weights_checked};
pub use stage::StageId;
pub use template::{
    baseline_context, few_shot_examples, format_instruction, pair_context, patent_block, render, template,
    with_format_reminder, FewShotExample, PromptContext,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("prompt context lacks field {{{0}}}")]
    MissingContextField(String),
    #[error("could not parse {grammar} reply: {message}")]
    ParseFailure { grammar: &'static str, message: String },
    #[error("all weights are zero")]
    DegenerateWeights,
}
