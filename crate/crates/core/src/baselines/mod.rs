//! Scoring strategies other than the full reasoning graph: fixed and equal
//! weighting, dimension ablations, regression-fitted weights and
//! single-prompt baselines.

mod ablation;
mod prompting;
mod regression;
mod strategy;

pub use ablation::{
    ablation_table, avg_drop, decimal, format_decimal, table_from_metrics, AblationError, AblationInput, AblationRow,
    AblationTable, AblationVariant,
};
pub use prompting::{run_prompt_baseline, BaselineScore, PromptBaseline};
pub use regression::{
    cross_validate, fit_regression, fold_assignment, CrossValidation, FitDiagnostics, FoldResult, RegressionError,
    RegressionFit, RegressionMethod, LASSO_MAX_SWEEPS, LASSO_TOLERANCE, MIN_ROWS,
};
pub use strategy::{score_with_strategy, DimensionSet, StrategyError, WeightingStrategy};
