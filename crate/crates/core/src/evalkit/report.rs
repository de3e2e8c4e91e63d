use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::agreement::AgreementReport;
use super::metrics::MetricSet;
use super::residuals::{residual_analysis, top_k_errors, GroupError, IpcLevel, Prediction, ResidualRecord};
use crate::corpus::IpcCode;
use crate::dims::Dims;
use crate::gateway::{estimate_cost, PriceTable, UsageRecord};

/// Headline figures reported for the full method on the original benchmark.
/// Carried for side-by-side reading only; nothing compares local runs to them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PublishedReference {
    pub pearson: f64,
    pub spearman: f64,
    pub mse: f64,
    pub mae: f64,
}

pub const PUBLISHED_REFERENCE: PublishedReference = PublishedReference {
    pearson: 0.938,
    spearman: 0.923,
    mse: 0.113,
    mae: 0.092,
};

/// Outcome for one pair of a batch run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub pair_id: String,
    /// First IPC code of patent `a`, canonical form.
    pub ipc: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension_scores: Option<Dims<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Dims<f64>>,
    /// Warning kinds raised while scoring.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    /// Set when the pair could not be scored; such pairs are excluded from metrics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl ScoredPair {
    pub fn new(pair_id: impl Into<String>, ipc: &IpcCode) -> Self {
        ScoredPair {
            pair_id: pair_id.into(),
            ipc: ipc.render(),
            predicted: None,
            gold: None,
            dimension_scores: None,
            weights: None,
            warnings: Vec::new(),
            failure: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub label: String,
    pub level: IpcLevel,
    pub top_k: usize,
    pub prices: Option<PriceTable>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            label: "marg".into(),
            level: IpcLevel::Section,
            top_k: 50,
            prices: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    /// Pairs with a predicted score.
    pub n: usize,
    pub n_failed: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricSet<f64>>,
    /// Why metrics are absent although labeled predictions exist.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics_note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agreement: Option<AgreementReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_residual: Option<f64>,
    pub ipc_level: IpcLevel,
    pub residuals: Vec<ResidualRecord<f64>>,
    pub per_section: BTreeMap<String, GroupError<f64>>,
    pub top_errors: Vec<ResidualRecord<f64>>,
    pub usage: UsageRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prices: Option<PriceTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
    /// Count per warning kind across all pairs.
    pub warnings: BTreeMap<String, usize>,
    pub pairs: Vec<ScoredPair>,
    pub published_reference: PublishedReference,
}

/// Aggregates per-pair outcomes into a report.
pub fn build_report(
    pairs: Vec<ScoredPair>,
    usage: UsageRecord,
    agreement: Option<AgreementReport>,
    options: &ReportOptions,
) -> EvalReport {
    let mut predictions = Vec::new();
    for p in &pairs {
        if let (Some(predicted), Some(gold)) = (p.predicted, p.gold) {
            if let Ok(ipc) = crate::corpus::parse_ipc(&p.ipc) {
                predictions.push(Prediction {
                    pair_id: p.pair_id.clone(),
                    predicted,
                    gold,
                    ipc,
                });
            }
        }
    }
    let (metrics, metrics_note) = if predictions.is_empty() {
        (None, None)
    } else {
        let pred: Vec<f64> = predictions.iter().map(|p| p.predicted).collect();
        let gold: Vec<f64> = predictions.iter().map(|p| p.gold).collect();
        match MetricSet::compute(&pred, &gold) {
            Ok(m) => (Some(m), None),
            Err(e) => (None, Some(e.to_string())),
        }
    };
    let analysis = residual_analysis(&predictions, options.level);
    let (mean_residual, residuals, per_section) = match analysis {
        Some(a) => (Some(a.mean_residual), a.records, a.per_group),
        None => (None, Vec::new(), BTreeMap::new()),
    };
    let top_errors = top_k_errors(&residuals, options.top_k);
    let mut warnings = BTreeMap::new();
    for w in pairs.iter().flat_map(|p| &p.warnings) {
        *warnings.entry(w.clone()).or_insert(0) += 1;
    }
    EvalReport {
        label: options.label.clone(),
        n: pairs.iter().filter(|p| p.predicted.is_some()).count(),
        n_failed: pairs.iter().filter(|p| p.failure.is_some()).count(),
        metrics,
        metrics_note,
        agreement,
        mean_residual,
        ipc_level: options.level,
        residuals,
        per_section,
        top_errors,
        usage,
        prices: options.prices,
        cost: options.prices.map(|p| estimate_cost(&usage, &p)),
        warnings,
        pairs,
        published_reference: PUBLISHED_REFERENCE,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Json,
    Text,
    Csv,
}

impl ReportFormat {
    /// Picks a format from the file extension; JSON when unknown.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => ReportFormat::Csv,
            Some("txt") => ReportFormat::Text,
            _ => ReportFormat::Json,
        }
    }
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "text" | "txt" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub fn to_json(report: &EvalReport) -> Result<String, ReportError> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

/// Column order of the per-pair CSV export.
pub const CSV_COLUMNS: [&str; 11] = [
    "pair_id",
    "ipc_section",
    "ipc",
    "predicted",
    "gold",
    "residual",
    "s_technical",
    "s_domain",
    "s_claim",
    "status",
    "warnings",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn to_csv(report: &EvalReport) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for p in &report.pairs {
        let residual = match (p.predicted, p.gold) {
            (Some(a), Some(b)) => Some(a - b),
            _ => None,
        };
        let dims = p.dimension_scores;
        let status = if p.failure.is_some() { "failed" } else { "ok" };
        w.write_record([
            p.pair_id.clone(),
            p.ipc.chars().next().map(String::from).unwrap_or_default(),
            p.ipc.clone(),
            opt(p.predicted),
            opt(p.gold),
            opt(residual),
            opt(dims.map(|d| d.technical)),
            opt(dims.map(|d| d.domain)),
            opt(dims.map(|d| d.claim)),
            status.to_string(),
            p.warnings.join(";"),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn to_text(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "run: {}", report.label);
    let _ = writeln!(out, "pairs scored: {}  failed: {}", report.n, report.n_failed);
    match (&report.metrics, &report.metrics_note) {
        (Some(m), _) => {
            let _ = writeln!(
                out,
                "pearson {:.3}  spearman {:.3}  mse {:.3}  mae {:.3}  rmse {:.3}  (n={})",
                m.pearson, m.spearman, m.mse, m.mae, m.rmse, m.n
            );
        }
        (None, Some(note)) => {
            let _ = writeln!(out, "metrics: unavailable ({note})");
        }
        (None, None) => {
            let _ = writeln!(out, "metrics: none (no labeled predictions)");
        }
    }
    if let Some(a) = &report.agreement {
        let _ = writeln!(
            out,
            "agreement: fleiss kappa {:.3}  cronbach alpha {:.3}  ({} items, {} raters)",
            a.fleiss_kappa, a.cronbach_alpha, a.n_items, a.n_raters
        );
    }
    if let Some(mr) = report.mean_residual {
        let _ = writeln!(out, "mean residual: {mr:+.3}");
    }
    if !report.per_section.is_empty() {
        let _ = writeln!(out, "\nper IPC {}:", report.ipc_level);
        let _ = writeln!(out, "  {:<6} {:>4} {:>8} {:>9}", "group", "n", "mae", "residual");
        for (k, g) in &report.per_section {
            let _ = writeln!(out, "  {:<6} {:>4} {:>8.3} {:>+9.3}", k, g.n, g.mae, g.mean_residual);
        }
    }
    if !report.top_errors.is_empty() {
        let _ = writeln!(out, "\nlargest errors:");
        for r in &report.top_errors {
            let _ = writeln!(
                out,
                "  {:<16} predicted {:.3}  gold {:.3}  residual {:+.3}",
                r.pair_id, r.predicted, r.gold, r.residual
            );
        }
    }
    let u = &report.usage;
    let _ = writeln!(
        out,
        "\nusage: {} calls, {} input tokens, {} output tokens",
        u.calls, u.input_tokens, u.output_tokens
    );
    if let Some(c) = report.cost {
        let _ = writeln!(out, "estimated cost: {c:.6}");
    }
    if !report.warnings.is_empty() {
        let list: Vec<String> = report.warnings.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let _ = writeln!(out, "warnings: {}", list.join(" "));
    }
    let failed: Vec<&ScoredPair> = report.pairs.iter().filter(|p| p.failure.is_some()).collect();
    if !failed.is_empty() {
        let _ = writeln!(out, "\nfailed pairs:");
        for p in failed {
            let _ = writeln!(out, "  {}: {}", p.pair_id, p.failure.as_deref().unwrap_or(""));
        }
    }
    let r = &report.published_reference;
    let _ = writeln!(
        out,
        "\npublished reference (not computed here): pearson {:.3}  spearman {:.3}  mse {:.3}  mae {:.3}",
        r.pearson, r.spearman, r.mse, r.mae
    );
    out
}

pub fn render_report(report: &EvalReport, format: ReportFormat) -> Result<String, ReportError> {
    match format {
        ReportFormat::Json => to_json(report),
        ReportFormat::Csv => to_csv(report),
        ReportFormat::Text => Ok(to_text(report)),
    }
}

pub fn write_report(report: &EvalReport, path: &Path, format: ReportFormat) -> Result<(), ReportError> {
    fs::write(path, render_report(report, format)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_ipc;

    fn scored(id: &str, predicted: f64, gold: f64, ipc: &str) -> ScoredPair {
        ScoredPair {
            predicted: Some(predicted),
            gold: Some(gold),
            ..ScoredPair::new(id, &parse_ipc(ipc).unwrap())
        }
    }

    #[test]
    fn empty_report_omits_metrics() {
        let r = build_report(Vec::new(), UsageRecord::default(), None, &ReportOptions::default());
        assert_eq!(r.n, 0);
        assert!(r.metrics.is_none());
        let json = to_json(&r).unwrap();
        assert!(!json.contains("\"metrics\""));
        assert!(json.contains("\"n\": 0"));
        assert_eq!(to_csv(&r).unwrap().lines().count(), 1);
    }

    #[test]
    fn three_pairs() {
        let pairs = vec![
            scored("p1", 0.2, 0.25, "G06F3/048"),
            scored("p2", 0.5, 0.5, "H04L29/06"),
            scored("p3", 0.9, 0.75, "G06K15/02"),
        ];
        let opts = ReportOptions {
            prices: Some(PriceTable::default()),
            ..ReportOptions::default()
        };
        let usage = UsageRecord {
            input_tokens: 1000,
            output_tokens: 100,
            calls: 3,
            ..UsageRecord::default()
        };
        let r = build_report(pairs, usage, None, &opts);
        assert_eq!(r.n, 3);
        let m = r.metrics.unwrap();
        assert_eq!(m.n, 3);
        assert!((m.spearman - 1.0).abs() < 1e-12);
        assert_eq!(r.per_section["G"].n, 2);
        assert_eq!(r.top_errors[0].pair_id, "p3");
        assert!((r.cost.unwrap() - (1000.0 * 0.15 + 100.0 * 0.6) / 1e6).abs() < 1e-15);
        let csv = to_csv(&r).unwrap();
        assert_eq!(csv.lines().next().unwrap(), CSV_COLUMNS.join(","));
        assert_eq!(csv.lines().count(), 4);
        assert!(to_text(&r).contains("published reference"));
    }

    #[test]
    fn failed_and_unlabeled_pairs_are_excluded_from_metrics() {
        let ipc = parse_ipc("A61K").unwrap();
        let failed = ScoredPair {
            failure: Some("stage sim_claim: no scripted response".into()),
            gold: Some(0.5),
            ..ScoredPair::new("bad", &ipc)
        };
        let unlabeled = ScoredPair {
            predicted: Some(0.4),
            warnings: vec!["renormalized".into()],
            ..ScoredPair::new("u", &ipc)
        };
        let r = build_report(vec![failed, unlabeled], UsageRecord::default(), None, &ReportOptions::default());
        assert_eq!((r.n, r.n_failed), (1, 1));
        assert!(r.metrics.is_none() && r.metrics_note.is_none());
        assert_eq!(r.warnings["renormalized"], 1);
        assert!(to_csv(&r).unwrap().contains("bad,A,A61K,,0.5,,,,,failed,"));
    }

    #[test]
    fn report_is_stable_and_round_trips() {
        let pairs = vec![scored("p1", 0.2, 0.25, "G06F"), scored("p2", 0.6, 0.5, "H04L")];
        let a = to_json(&build_report(pairs.clone(), UsageRecord::default(), None, &ReportOptions::default())).unwrap();
        let b = to_json(&build_report(pairs, UsageRecord::default(), None, &ReportOptions::default())).unwrap();
        assert_eq!(a, b);
        let back: EvalReport = serde_json::from_str(&a).unwrap();
        assert_eq!(to_json(&back).unwrap(), a);
    }
}
