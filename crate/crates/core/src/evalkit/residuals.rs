use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{parse_ipc, IpcCode};
use crate::scalar::{from_usize, Real};

/// One scored pair going into error analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T = f64> {
    pub pair_id: String,
    pub predicted: T,
    pub gold: T,
    /// First IPC code of patent `a`.
    pub ipc: IpcCode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRecord<T = f64> {
    pub pair_id: String,
    pub predicted: T,
    pub gold: T,
    /// `predicted - gold`.
    pub residual: T,
    pub ipc_section: char,
    pub ipc_class: String,
}

/// How per-IPC breakdowns are keyed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IpcLevel {
    /// Section letter, e.g. `C`.
    #[default]
    Section,
    /// Section and class, e.g. `C22`.
    Class,
}

impl fmt::Display for IpcLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IpcLevel::Section => "section",
            IpcLevel::Class => "class",
        })
    }
}

impl FromStr for IpcLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "section" => Ok(IpcLevel::Section),
            "class" => Ok(IpcLevel::Class),
            other => Err(format!("unknown IPC level `{other}` (expected section or class)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupError<T = f64> {
    pub mae: T,
    pub mean_residual: T,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualAnalysis<T = f64> {
    pub mean_residual: T,
    /// Sorted by `|residual|` descending, ties by `pair_id` ascending.
    pub records: Vec<ResidualRecord<T>>,
    pub level: IpcLevel,
    pub per_group: BTreeMap<String, GroupError<T>>,
}

fn by_error<T: Real>(a: &ResidualRecord<T>, b: &ResidualRecord<T>) -> Ordering {
    b.residual
        .abs()
        .partial_cmp(&a.residual.abs())
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.pair_id.cmp(&b.pair_id))
}

pub fn residual_records<T: Real>(predictions: &[Prediction<T>]) -> Vec<ResidualRecord<T>> {
    let mut records: Vec<ResidualRecord<T>> = predictions
        .iter()
        .map(|p| ResidualRecord {
            pair_id: p.pair_id.clone(),
            predicted: p.predicted,
            gold: p.gold,
            residual: p.predicted - p.gold,
            ipc_section: p.ipc.section,
            ipc_class: p.ipc.class_symbol(),
        })
        .collect();
    records.sort_by(by_error);
    records
}

/// Mean residual, sorted records and per-IPC error breakdown.
///
/// Returns `None` for an empty input.
pub fn residual_analysis<T: Real>(predictions: &[Prediction<T>], level: IpcLevel) -> Option<ResidualAnalysis<T>> {
    if predictions.is_empty() {
        return None;
    }
    let records = residual_records(predictions);
    let n: T = from_usize(records.len());
    let mean_residual = records.iter().map(|r| r.residual).sum::<T>() / n;
    let mut groups: BTreeMap<String, Vec<T>> = BTreeMap::new();
    for r in &records {
        let key = match level {
            IpcLevel::Section => r.ipc_section.to_string(),
            IpcLevel::Class => r.ipc_class.clone(),
        };
        groups.entry(key).or_default().push(r.residual);
    }
    let per_group = groups
        .into_iter()
        .map(|(k, res)| {
            let m: T = from_usize(res.len());
            let entry = GroupError {
                mae: res.iter().map(|r| r.abs()).sum::<T>() / m,
                mean_residual: res.iter().copied().sum::<T>() / m,
                n: res.len(),
            };
            (k, entry)
        })
        .collect();
    Some(ResidualAnalysis {
        mean_residual,
        records,
        level,
        per_group,
    })
}

/// The `k` records with the largest absolute residual.
pub fn top_k_errors<T: Real>(records: &[ResidualRecord<T>], k: usize) -> Vec<ResidualRecord<T>> {
    let mut sorted = records.to_vec();
    sorted.sort_by(by_error);
    sorted.truncate(k);
    sorted
}

/// One row of a prediction table file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct PredictionRow {
    pub pair_id: String,
    pub predicted: f64,
    pub gold: f64,
    /// IPC code of patent `a`; compact or canonical notation.
    pub ipc: String,
    #[serde(default)]
    pub title_a: Option<String>,
    #[serde(default)]
    pub title_b: Option<String>,
    #[serde(default)]
    pub ipc_b: Option<String>,
    #[serde(default)]
    pub error_type: Option<String>,
    /// Absolute error as reported alongside the prediction, if any.
    #[serde(default)]
    pub error: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl PredictionRow {
    pub fn to_prediction(&self) -> Result<Prediction<f64>, String> {
        Ok(Prediction {
            pair_id: self.pair_id.clone(),
            predicted: self.predicted,
            gold: self.gold,
            ipc: parse_ipc(&self.ipc).map_err(|e| e.to_string())?,
        })
    }
}

/// Reads a CSV prediction table with at least `pair_id,predicted,gold,ipc` columns.
pub fn read_prediction_table(path: &Path) -> Result<Vec<PredictionRow>, TableError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut rows = Vec::new();
    for (idx, row) in reader.deserialize::<PredictionRow>().enumerate() {
        let row = row?;
        parse_ipc(&row.ipc).map_err(|e| TableError::Row {
            row: idx + 1,
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}
