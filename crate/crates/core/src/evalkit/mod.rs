//! Evaluation: correlation and error metrics, annotator agreement, residual
//! analysis by IPC group and report emission.

mod agreement;
mod metrics;
mod report;
mod residuals;

pub use agreement::{agreement_report, cronbach_alpha, fleiss_kappa, likert_counts, AgreementError, AgreementReport};
pub use metrics::{average_ranks, error_metrics, pearson, spearman, ErrorMetrics, MetricError, MetricSet};
pub use report::{
    build_report, render_report, to_csv, to_json, to_text, write_report, EvalReport, PublishedReference,
    ReportError, ReportFormat, ReportOptions, ScoredPair, CSV_COLUMNS, PUBLISHED_REFERENCE,
};
pub use residuals::{
    read_prediction_table, residual_analysis, residual_records, top_k_errors, GroupError, IpcLevel, Prediction,
    PredictionRow, ResidualAnalysis, ResidualRecord, TableError,
};
