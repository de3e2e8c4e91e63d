use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::Deserialize;

use super::{AnnotatedPair, CorpusError, PatentDocument, PatentPair};
use crate::dims::Dims;

/// On-disk layout of a dataset file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DatasetFormat {
    /// One JSON record per line.
    #[default]
    JsonLines,
    /// A single JSON array of records.
    JsonArray,
}

impl DatasetFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => DatasetFormat::JsonArray,
            _ => DatasetFormat::JsonLines,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    pair_id: String,
    a: PatentDocument,
    b: PatentDocument,
    #[serde(default)]
    ratings: Option<Vec<i64>>,
    #[serde(default)]
    gold: Option<f64>,
    #[serde(default)]
    dimension_scores: Option<Dims<f64>>,
}

fn schema(line: usize, message: impl ToString) -> CorpusError {
    CorpusError::Schema {
        line,
        message: message.to_string(),
    }
}

fn into_pair(record: Record, line: usize) -> Result<AnnotatedPair, CorpusError> {
    let pair = PatentPair::new(record.pair_id, record.a, record.b).map_err(|e| schema(line, e))?;
    let mut annotated = match (record.ratings, record.gold) {
        (Some(ratings), _) if !ratings.is_empty() => {
            let ratings = ratings
                .into_iter()
                .map(|r| u8::try_from(r).map_err(|_| CorpusError::OutOfRangeRating(r)))
                .collect::<Result<Vec<u8>, _>>()
                .map_err(|e| schema(line, e))?;
            AnnotatedPair::from_ratings(pair, ratings).map_err(|e| schema(line, e))?
        }
        (_, Some(gold)) => AnnotatedPair::from_gold(pair, gold).map_err(|e| schema(line, e))?,
        (Some(_), _) => return Err(schema(line, "`ratings` is empty")),
        (None, None) => AnnotatedPair::unlabeled(pair),
    };
    annotated.dimension_scores = record.dimension_scores;
    Ok(annotated)
}

/// Parses dataset text. Blank lines are skipped in line-delimited input.
pub fn parse_dataset(reader: impl Read, format: DatasetFormat) -> Result<Vec<AnnotatedPair>, CorpusError> {
    match format {
        DatasetFormat::JsonLines => {
            let mut out = Vec::new();
            for (idx, line) in BufReader::new(reader).lines().enumerate() {
                let line_no = idx + 1;
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: Record = serde_json::from_str(&line).map_err(|e| schema(line_no, e))?;
                out.push(into_pair(record, line_no)?);
            }
            Ok(out)
        }
        DatasetFormat::JsonArray => {
            let mut text = String::new();
            BufReader::new(reader).read_to_string(&mut text)?;
            if text.trim().is_empty() {
                return Ok(Vec::new());
            }
            let records: Vec<Record> = serde_json::from_str(&text).map_err(|e| schema(e.line(), e))?;
            records
                .into_iter()
                .enumerate()
                .map(|(i, r)| into_pair(r, i + 1))
                .collect()
        }
    }
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Vec<AnnotatedPair>, CorpusError> {
    parse_dataset(fs::File::open(path)?, format)
}

/// Reads a single patent document stored as one JSON object.
pub fn read_patent_document(path: &Path) -> Result<PatentDocument, CorpusError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| schema(e.line(), e))
}
