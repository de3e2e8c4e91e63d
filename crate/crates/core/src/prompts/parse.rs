//! Parsers for the structured reply formats each stage asks for.
//!
//! Every grammar is a marker followed by a value (`Score: 0.7`), matched
//! case-insensitively after markdown emphasis, code fences and backslash
//! escapes have been stripped.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::PromptError;
use crate::corpus::{DomainRelation, RelationCategory};
use crate::dims::Dims;
use crate::engine::WeightVector;
use crate::scalar::{lit, Real};

/// Largest tolerated deviation of a weight or relevance triple from sum 1.
pub const SUM_TOLERANCE: f64 = 0.05;

const NUM: &str = r"([-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?)";

fn re(pattern: &str) -> Regex {
    Regex::new(pattern).expect("static pattern")
}

static NUMBER: LazyLock<Regex> = LazyLock::new(|| re(NUM));
static SCORE: LazyLock<Regex> = LazyLock::new(|| re(&format!(r"(?i)\bscore\b\s*[:=]?\s*[\[(]?\s*{NUM}")));
static REASON: LazyLock<Regex> = LazyLock::new(|| re(r"(?is)\breason\b\s*[:=]?\s*(.*)$"));
static CATEGORY: LazyLock<Regex> = LazyLock::new(|| re(r"(?i)\bcategory\b\s*[:=]\s*\[?\s*([a-z]+)"));
static EXPLANATION: LazyLock<Regex> = LazyLock::new(|| re(r"(?is)\bexplanation\b\s*[:=]?\s*(.*)$"));
static JUSTIFICATION: LazyLock<Regex> = LazyLock::new(|| re(r"(?is)\bjustification\b\s*[:=]?\s*(.*)$"));
static PATTERN: LazyLock<Regex> = LazyLock::new(|| re(r"(?i)\bpattern\b\s*[:=]\s*\[?\s*([^,\]\n]+)"));
static METRIC: LazyLock<Regex> = LazyLock::new(|| re(&format!(r"(?i)\bmetric\b\s*[:=]\s*[\[(]?\s*{NUM}")));
static FINAL: LazyLock<Regex> =
    LazyLock::new(|| re(&format!(r"(?i)patent_similarity_mar\s*[:=]?\s*[\[(]?\s*{NUM}")));
static SCORES_MARKER: LazyLock<Regex> = LazyLock::new(|| re(r"(?i)\bscores\b\s*[:=]?"));
static WEIGHTS_MARKER: LazyLock<Regex> = LazyLock::new(|| re(r"(?i)\bweights\b\s*[:=]?"));
static REL_KEYS: LazyLock<[Regex; 3]> = LazyLock::new(|| {
    [
        re(&format!(r"(?i)\btechnical(?:\s+features?)?\s*[:=]\s*{NUM}")),
        re(&format!(r"(?i)\b(?:application\s+)?domains?\s*[:=]\s*{NUM}")),
        re(&format!(r"(?i)\bclaims?(?:\s+scope)?\s*[:=]\s*{NUM}")),
    ]
});
static WEIGHT_KEYS: LazyLock<[Regex; 3]> = LazyLock::new(|| {
    [
        re(&format!(r"(?i)\bw[_\s]*\{{?t\}}?\s*[:=]\s*{NUM}")),
        re(&format!(r"(?i)\bw[_\s]*\{{?d\}}?\s*[:=]\s*{NUM}")),
        re(&format!(r"(?i)\bw[_\s]*\{{?c\}}?\s*[:=]\s*{NUM}")),
    ]
});

/// Removes markdown decoration and TeX-style escapes.
pub fn clean(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        if line.trim_start().starts_with("```") {
            continue;
        }
        out.push_str(line);
        out.push('\n');
    }
    out.replace("**", "")
        .replace("__", "")
        .replace('`', "")
        .replace("\\_", "_")
        .replace('$', "")
}

fn failure(grammar: &'static str, message: impl Into<String>) -> PromptError {
    PromptError::ParseFailure {
        grammar,
        message: message.into(),
    }
}

fn number(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn clamp01(value: f64) -> (f64, bool) {
    if value < 0.0 {
        (0.0, true)
    } else if value > 1.0 {
        (1.0, true)
    } else {
        (value, false)
    }
}

fn tail(marker: &Regex, text: &str) -> String {
    marker
        .captures(text)
        .map(|c| strip_brackets(c[1].trim()).to_string())
        .unwrap_or_default()
}

fn strip_brackets(s: &str) -> &str {
    match s.strip_prefix('[') {
        Some(inner) => inner.strip_suffix(']').or(inner.strip_suffix("].")).unwrap_or(inner).trim(),
        None => s,
    }
}

/// Dimension score with the model's justification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreWithReason<T = f64> {
    pub score: T,
    pub reason: String,
    /// The raw value was outside `[0, 1]` and has been clamped.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub clamped: bool,
}

impl<T: Real> fmt::Display for ScoreWithReason<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Score: {}, Reason: {}", self.score, self.reason)
    }
}

/// `Score: [numerical score], Reason: [justification]`.
pub fn parse_score_reason<T: Real>(text: &str) -> Result<ScoreWithReason<T>, PromptError> {
    let text = clean(text);
    let caps = SCORE.captures(&text).ok_or_else(|| failure("score", "no numeric score after a Score marker"))?;
    let raw = number(&caps[1]).ok_or_else(|| failure("score", format!("unreadable number {:?}", &caps[1])))?;
    let (score, clamped) = clamp01(raw);
    let rest = &text[caps.get(0).unwrap().end()..];
    Ok(ScoreWithReason {
        score: lit(score),
        reason: tail(&REASON, rest),
        clamped,
    })
}

/// Last `Score:` number in the reply, as printed after free-form reasoning.
pub fn parse_trailing_score<T: Real>(text: &str) -> Result<ScoreWithReason<T>, PromptError> {
    let text = clean(text);
    let caps = SCORE
        .captures_iter(&text)
        .last()
        .ok_or_else(|| failure("trailing_score", "no numeric score after a Score marker"))?;
    let raw = number(&caps[1]).ok_or_else(|| failure("trailing_score", "unreadable number"))?;
    let (score, clamped) = clamp01(raw);
    let reasoning = Regex::new(r"(?is)\breasoning\b\s*[:=]?\s*(.*)")
        .expect("static pattern")
        .captures(&text[..caps.get(0).unwrap().start()])
        .map(|c| strip_brackets(c[1].trim()).to_string())
        .unwrap_or_default();
    Ok(ScoreWithReason {
        score: lit(score),
        reason: reasoning,
        clamped,
    })
}

/// `Category: [relationship], Explanation: [justification]`.
pub fn parse_category(text: &str) -> Result<DomainRelation, PromptError> {
    let text = clean(text);
    let caps = CATEGORY.captures(&text).ok_or_else(|| failure("category", "no Category marker"))?;
    let category: RelationCategory = caps[1]
        .parse()
        .map_err(|_| failure("category", format!("unknown relationship {:?}", &caps[1])))?;
    let rest = &text[caps.get(0).unwrap().end()..];
    Ok(DomainRelation {
        category,
        explanation: tail(&EXPLANATION, rest),
    })
}

pub(crate) fn format_relation(relation: &DomainRelation) -> String {
    format!("Category: {}, Explanation: {}", relation.category, relation.explanation)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    UniformSimilarity,
    DimensionDominance,
    ComplementaryDimensions,
}

impl PatternKind {
    pub const ALL: [PatternKind; 3] = [
        PatternKind::UniformSimilarity,
        PatternKind::DimensionDominance,
        PatternKind::ComplementaryDimensions,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PatternKind::UniformSimilarity => "uniform similarity",
            PatternKind::DimensionDominance => "dimension dominance",
            PatternKind::ComplementaryDimensions => "complementary dimensions",
        }
    }
}

/// Shape of the three dimension scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionPattern {
    pub pattern: PatternKind,
    pub justification: String,
}

impl fmt::Display for DistributionPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Pattern: {}, Justification: {}", self.pattern.label(), self.justification)
    }
}

/// `Pattern: [pattern], Justification: [explanation]`.
pub fn parse_pattern(text: &str) -> Result<DistributionPattern, PromptError> {
    let text = clean(text);
    let caps = PATTERN.captures(&text).ok_or_else(|| failure("pattern", "no Pattern marker"))?;
    let label = caps[1].to_ascii_lowercase();
    let pattern = if label.contains("uniform") {
        PatternKind::UniformSimilarity
    } else if label.contains("dominan") {
        PatternKind::DimensionDominance
    } else if label.contains("complementar") {
        PatternKind::ComplementaryDimensions
    } else {
        return Err(failure("pattern", format!("unknown pattern {:?}", caps[1].trim())));
    };
    let rest = &text[caps.get(0).unwrap().end()..];
    Ok(DistributionPattern {
        pattern,
        justification: tail(&JUSTIFICATION, rest),
    })
}

/// Predicted importance of each dimension, summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceAssessment<T = f64> {
    pub technical: T,
    pub domain: T,
    pub claim: T,
    pub explanation: String,
    /// The raw triple did not sum to 1 and was rescaled.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub renormalized: bool,
}

impl<T: Real> RelevanceAssessment<T> {
    pub fn as_dims(&self) -> Dims<T> {
        Dims::new(self.technical, self.domain, self.claim)
    }
}

impl<T: Real> fmt::Display for RelevanceAssessment<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Scores: [technical features: {}, application domains: {}, claim scope: {}], Explanation: {}",
            self.technical, self.domain, self.claim, self.explanation
        )
    }
}

/// Reads a labelled triple after `marker`, falling back to the first three
/// numbers when the labels are missing.
fn triple(
    grammar: &'static str,
    text: &str,
    marker: &Regex,
    keys: &[Regex; 3],
    end_marker: &Regex,
) -> Result<([f64; 3], usize), PromptError> {
    let start = marker
        .find(text)
        .ok_or_else(|| failure(grammar, "marker not found"))?
        .end();
    let body_end = end_marker.find(&text[start..]).map_or(text.len(), |m| start + m.start());
    let body = &text[start..body_end];
    let labelled: Option<Vec<f64>> = keys
        .iter()
        .map(|k| k.captures(body).and_then(|c| number(&c[1])))
        .collect();
    let values = match labelled {
        Some(v) => [v[0], v[1], v[2]],
        None => {
            let nums: Vec<f64> = NUMBER
                .captures_iter(body)
                .filter_map(|c| number(&c[1]))
                .take(3)
                .collect();
            if nums.len() < 3 {
                return Err(failure(grammar, format!("expected three values, found {}", nums.len())));
            }
            [nums[0], nums[1], nums[2]]
        }
    };
    if values.iter().any(|v| *v < 0.0) {
        return Err(failure(grammar, "negative value"));
    }
    Ok((values, body_end))
}

fn renormalize(grammar: &'static str, values: [f64; 3]) -> Result<([f64; 3], bool), PromptError> {
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(failure(grammar, format!("values sum to {sum}, not 1")));
    }
    if (sum - 1.0).abs() <= 1e-12 {
        return Ok((values, false));
    }
    Ok((values.map(|v| v / sum), true))
}

/// `Scores: [technical features: score, application domains: score, claim scope: score], Explanation: [justification]`.
pub fn parse_relevance<T: Real>(text: &str) -> Result<RelevanceAssessment<T>, PromptError> {
    let text = clean(text);
    let (raw, end) = triple("relevance", &text, &SCORES_MARKER, &REL_KEYS, &EXPLANATION)?;
    let (v, renormalized) = renormalize("relevance", raw)?;
    Ok(RelevanceAssessment {
        technical: lit(v[0]),
        domain: lit(v[1]),
        claim: lit(v[2]),
        explanation: tail(&EXPLANATION, &text[end..]),
        renormalized,
    })
}

/// `Weights: [w_T: score, w_D: score, w_C: score], Justification: [explanation]`.
///
/// An all-zero triple is reported as [`PromptError::DegenerateWeights`] so the
/// caller can fall back to equal weighting.
pub fn parse_weights<T: Real>(text: &str) -> Result<WeightVector<T>, PromptError> {
    parse_weights_checked(text).map(|(w, _)| w)
}

/// [`parse_weights`] that also reports whether the triple was rescaled.
pub(crate) fn parse_weights_checked<T: Real>(text: &str) -> Result<(WeightVector<T>, bool), PromptError> {
    let text = clean(text);
    let (raw, end) = triple("weights", &text, &WEIGHTS_MARKER, &WEIGHT_KEYS, &JUSTIFICATION)?;
    if raw.iter().all(|v| *v == 0.0) {
        return Err(PromptError::DegenerateWeights);
    }
    let (v, renormalized) = renormalize("weights", raw)?;
    let weights = WeightVector {
        w_t: lit(v[0]),
        w_d: lit(v[1]),
        w_c: lit(v[2]),
        justification: tail(&JUSTIFICATION, &text[end..]),
    };
    Ok((weights, renormalized))
}

/// Consistency between predicted relevance and the observed score pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessScore<T = f64> {
    pub value: T,
    pub justification: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub clamped: bool,
}

impl<T: Real> fmt::Display for RobustnessScore<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Metric: {}, Justification: {}", self.value, self.justification)
    }
}

/// `Metric: [score], Justification: [explanation]`.
pub fn parse_robustness<T: Real>(text: &str) -> Result<RobustnessScore<T>, PromptError> {
    let text = clean(text);
    let caps = METRIC.captures(&text).ok_or_else(|| failure("robustness", "no numeric Metric value"))?;
    let raw = number(&caps[1]).ok_or_else(|| failure("robustness", "unreadable number"))?;
    let (value, clamped) = clamp01(raw);
    let rest = &text[caps.get(0).unwrap().end()..];
    Ok(RobustnessScore {
        value: lit(value),
        justification: tail(&JUSTIFICATION, rest),
        clamped,
    })
}

/// Final score reported by the model, with a flag when it had to be clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinalScore<T = f64> {
    pub value: T,
    pub clamped: bool,
}

/// `Patent_Similarity_MAR :[score]`.
pub fn parse_final<T: Real>(text: &str) -> Result<FinalScore<T>, PromptError> {
    let text = clean(text);
    let caps = FINAL
        .captures(&text)
        .ok_or_else(|| failure("final", "no Patent_Similarity_MAR marker with a number"))?;
    let raw = number(&caps[1]).ok_or_else(|| failure("final", "unreadable number"))?;
    let (value, clamped) = clamp01(raw);
    Ok(FinalScore {
        value: lit(value),
        clamped,
    })
}

/// Free-text summary from a single extraction prompt.
pub fn parse_summary(text: &str) -> Result<String, PromptError> {
    let cleaned = clean(text);
    let trimmed = cleaned.trim();
    if trimmed.is_empty() {
        return Err(failure("summary", "empty reply"));
    }
    Ok(trimmed.to_string())
}

/// Technical, domain and claim summaries of one patent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectProfile {
    pub technical: String,
    pub domain: String,
    pub claim: String,
}

static SECTION_LINE: LazyLock<Regex> = LazyLock::new(|| re(r"(?m)^[\s#>*\-\d.)]*"));

/// Splits `text` at lines opening with one of `markers`; each section runs
/// until the next marker line. Missing markers yield `None`.
pub(crate) fn split_sections<'a>(text: &'a str, markers: &[&str]) -> Vec<Option<&'a str>> {
    // (marker index, line start, content start)
    let mut starts: Vec<(usize, usize, usize)> = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let prefix = SECTION_LINE.find(line).map_or(0, |m| m.end());
        let lower = line[prefix..].to_ascii_lowercase();
        if let Some(idx) = markers
            .iter()
            .position(|m| lower.starts_with(&m.to_ascii_lowercase()))
        {
            if !starts.iter().any(|(i, _, _)| *i == idx) {
                starts.push((idx, offset, offset + prefix));
            }
        }
        offset += line.len();
    }
    let mut bounds: Vec<usize> = starts.iter().map(|(_, line, _)| *line).collect();
    bounds.sort_unstable();
    markers
        .iter()
        .enumerate()
        .map(|(idx, _)| {
            let (_, line, start) = *starts.iter().find(|(i, _, _)| *i == idx)?;
            let end = bounds.iter().copied().find(|b| *b > line).unwrap_or(text.len());
            Some(&text[start..end])
        })
        .collect()
}

const PROFILE_MARKERS: [&str; 3] = ["technical features", "application domains", "claim scope"];

/// Combined extraction reply with one section per dimension.
pub fn parse_profile(text: &str) -> Result<AspectProfile, PromptError> {
    let text = clean(text);
    let sections = split_sections(&text, &PROFILE_MARKERS);
    let mut out = Vec::with_capacity(3);
    for (marker, section) in PROFILE_MARKERS.iter().zip(sections) {
        let section = section.ok_or_else(|| failure("profile", format!("missing section {marker:?}")))?;
        let body = section[marker.len()..].trim_start_matches([':', ' ', '\t']).trim();
        let body = strip_brackets(body);
        if body.is_empty() {
            return Err(failure("profile", format!("empty section {marker:?}")));
        }
        out.push(body.to_string());
    }
    let claim = out.pop().unwrap();
    let domain = out.pop().unwrap();
    let technical = out.pop().unwrap();
    Ok(AspectProfile {
        technical,
        domain,
        claim,
    })
}

/// Outputs of the four reasoning stages.
#[derive(Debug, Clone, PartialEq)]
pub struct ReasoningBundle<T = f64> {
    pub relation: DomainRelation,
    pub pattern: DistributionPattern,
    pub relevance: RelevanceAssessment<T>,
    pub robustness: RobustnessScore<T>,
}

const REASONING_MARKERS: [&str; 4] = ["category", "pattern", "scores", "metric"];

/// Combined reasoning reply carrying the Category, Pattern, Scores and Metric lines.
pub fn parse_reasoning<T: Real>(text: &str) -> Result<ReasoningBundle<T>, PromptError> {
    let text = clean(text);
    let sections = split_sections(&text, &REASONING_MARKERS);
    let get = |i: usize| {
        sections[i].ok_or_else(|| failure("reasoning", format!("missing {:?} line", REASONING_MARKERS[i])))
    };
    Ok(ReasoningBundle {
        relation: parse_category(get(0)?)?,
        pattern: parse_pattern(get(1)?)?,
        relevance: parse_relevance(get(2)?)?,
        robustness: parse_robustness(get(3)?)?,
    })
}
