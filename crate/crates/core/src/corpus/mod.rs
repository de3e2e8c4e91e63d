//! Patent documents, annotated pairs and dataset handling.

mod dataset;
mod ipc;
mod likert;
mod sample;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dims::Dims;

pub use dataset::{load_dataset, parse_dataset, read_patent_document, DatasetFormat};
pub use ipc::{classify_ipc_relation, parse_ipc, IpcCode};
pub use likert::{normalize_likert, qc_filter, sample_std_dev, QC_MAX_STD_DEV};
pub use sample::stratified_sample;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed IPC code `{raw}`: {reason}")]
    MalformedIpc { raw: String, reason: String },
    #[error("no ratings given")]
    EmptyRatings,
    #[error("rating {0} is outside the 1-5 Likert scale")]
    OutOfRangeRating(i64),
    #[error("pair `{pair_id}` has {count} rating(s); at least 2 are required")]
    TooFewRatings { pair_id: String, count: usize },
    #[error("invalid patent document: {0}")]
    InvalidDocument(String),
    #[error("pair `{0}` compares a patent with itself")]
    SelfPair(String),
    #[error("gold score {0} is outside [0, 1]")]
    GoldOutOfRange(f64),
    /// `line` is 0 when the error is not tied to a line.
    #[error("{}", schema_message(*line, message))]
    Schema { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn schema_message(line: usize, message: &str) -> String {
    match line {
        0 => message.to_string(),
        n => format!("line {n}: {message}"),
    }
}

/// Title, abstract, claims and IPC codes of a single patent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDocument", into = "RawDocument")]
pub struct PatentDocument {
    id: String,
    title: String,
    abstract_text: String,
    claims: Vec<String>,
    ipc_codes: Vec<IpcCode>,
}

#[derive(Serialize, Deserialize)]
struct RawDocument {
    id: String,
    title: String,
    #[serde(rename = "abstract")]
    abstract_text: String,
    claims: Vec<String>,
    ipc: Vec<IpcCode>,
}

impl TryFrom<RawDocument> for PatentDocument {
    type Error = CorpusError;

    fn try_from(raw: RawDocument) -> Result<Self, Self::Error> {
        PatentDocument::new(raw.id, raw.title, raw.abstract_text, raw.claims, raw.ipc)
    }
}

impl From<PatentDocument> for RawDocument {
    fn from(doc: PatentDocument) -> Self {
        RawDocument {
            id: doc.id,
            title: doc.title,
            abstract_text: doc.abstract_text,
            claims: doc.claims,
            ipc: doc.ipc_codes,
        }
    }
}

impl PatentDocument {
    pub fn new(
        id: impl Into<String>,
        title: impl Into<String>,
        abstract_text: impl Into<String>,
        claims: Vec<String>,
        ipc_codes: Vec<IpcCode>,
    ) -> Result<Self, CorpusError> {
        let doc = PatentDocument {
            id: id.into(),
            title: title.into(),
            abstract_text: abstract_text.into(),
            claims,
            ipc_codes,
        };
        if doc.title.trim().is_empty() {
            return Err(CorpusError::InvalidDocument(format!("`{}` has an empty title", doc.id)));
        }
        if doc.abstract_text.trim().is_empty() {
            return Err(CorpusError::InvalidDocument(format!("`{}` has an empty abstract", doc.id)));
        }
        if doc.claims.is_empty() || doc.claims.iter().all(|c| c.trim().is_empty()) {
            return Err(CorpusError::InvalidDocument(format!("`{}` has no claims", doc.id)));
        }
        if doc.ipc_codes.is_empty() {
            return Err(CorpusError::InvalidDocument(format!("`{}` has no IPC codes", doc.id)));
        }
        Ok(doc)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn title(&self) -> &str {
        &self.title
    }

    pub fn abstract_text(&self) -> &str {
        &self.abstract_text
    }

    pub fn claims(&self) -> &[String] {
        &self.claims
    }

    pub fn ipc_codes(&self) -> &[IpcCode] {
        &self.ipc_codes
    }

    /// Section letter of the first IPC code.
    pub fn primary_section(&self) -> char {
        self.ipc_codes[0].section
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatentPair {
    pub pair_id: String,
    pub a: PatentDocument,
    pub b: PatentDocument,
}

impl PatentPair {
    pub fn new(pair_id: impl Into<String>, a: PatentDocument, b: PatentDocument) -> Result<Self, CorpusError> {
        let pair_id = pair_id.into();
        if a.id == b.id {
            return Err(CorpusError::SelfPair(pair_id));
        }
        Ok(PatentPair { pair_id, a, b })
    }
}

/// A pair with its expert ratings and the gold score derived from them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnotatedPair {
    pub pair: PatentPair,
    /// Per-annotator Likert ratings; empty when only an aggregated gold was shipped.
    pub ratings: Vec<u8>,
    /// `None` for unlabeled pairs, which can be scored but not evaluated.
    pub gold_normalized: Option<f64>,
    /// Sample standard deviation of `ratings` (0 for fewer than two ratings).
    pub rating_stddev: f64,
    /// Precomputed dimension scores, when the dataset carries them.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dimension_scores: Option<Dims<f64>>,
}

impl AnnotatedPair {
    pub fn from_ratings(pair: PatentPair, ratings: Vec<u8>) -> Result<Self, CorpusError> {
        let gold_normalized = normalize_likert(&ratings)?;
        let rating_stddev = if ratings.len() >= 2 { sample_std_dev(&ratings) } else { 0.0 };
        Ok(AnnotatedPair {
            pair,
            ratings,
            gold_normalized: Some(gold_normalized),
            rating_stddev,
            dimension_scores: None,
        })
    }

    pub fn from_gold(pair: PatentPair, gold: f64) -> Result<Self, CorpusError> {
        if !(0.0..=1.0).contains(&gold) {
            return Err(CorpusError::GoldOutOfRange(gold));
        }
        Ok(AnnotatedPair {
            pair,
            ratings: Vec::new(),
            gold_normalized: Some(gold),
            rating_stddev: 0.0,
            dimension_scores: None,
        })
    }

    pub fn unlabeled(pair: PatentPair) -> Self {
        AnnotatedPair {
            pair,
            ratings: Vec::new(),
            gold_normalized: None,
            rating_stddev: 0.0,
            dimension_scores: None,
        }
    }

    pub fn pair_id(&self) -> &str {
        &self.pair.pair_id
    }

    /// Section of patent `a`'s first IPC code, used for stratification and error breakdowns.
    pub fn section(&self) -> char {
        self.pair.a.primary_section()
    }
}

/// Relationship label between the technical domains of two patents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationCategory {
    Identical,
    Hierarchical,
    Overlapping,
    Distinct,
}

impl RelationCategory {
    pub const ALL: [RelationCategory; 4] = [
        RelationCategory::Identical,
        RelationCategory::Hierarchical,
        RelationCategory::Overlapping,
        RelationCategory::Distinct,
    ];

    pub(crate) fn strength(self) -> u8 {
        match self {
            RelationCategory::Identical => 3,
            RelationCategory::Hierarchical => 2,
            RelationCategory::Overlapping => 1,
            RelationCategory::Distinct => 0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelationCategory::Identical => "identical",
            RelationCategory::Hierarchical => "hierarchical",
            RelationCategory::Overlapping => "overlapping",
            RelationCategory::Distinct => "distinct",
        }
    }
}

impl fmt::Display for RelationCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationCategory {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        RelationCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == lower)
            .ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainRelation {
    pub category: RelationCategory,
    pub explanation: String,
}


#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;

    #[test]
    fn document_invariants() {
        let ipc = vec![parse_ipc("G06F").unwrap()];
        assert!(PatentDocument::new("x", "", "abs", vec!["c".into()], ipc.clone()).is_err());
        assert!(PatentDocument::new("x", "t", " ", vec!["c".into()], ipc.clone()).is_err());
        assert!(PatentDocument::new("x", "t", "abs", vec![], ipc.clone()).is_err());
        assert!(PatentDocument::new("x", "t", "abs", vec!["c".into()], vec![]).is_err());
        assert!(PatentDocument::new("x", "t", "abs", vec!["c".into()], ipc).is_ok());
    }

    #[test]
    fn pair_rejects_same_ids() {
        let a = doc("P1", &["G06F"]);
        assert!(matches!(PatentPair::new("p", a.clone(), a), Err(CorpusError::SelfPair(_))));
    }

    #[test]
    fn annotated_pair_derives_gold() {
        let ap = AnnotatedPair::from_ratings(pair("p", "G06F"), vec![4, 4, 5]).unwrap();
        assert!((ap.gold_normalized.unwrap() - 0.8333333333333334).abs() < 1e-12);
        assert_eq!(ap.section(), 'G');
        assert!(AnnotatedPair::from_gold(pair("p", "G06F"), 1.5).is_err());
    }
}
