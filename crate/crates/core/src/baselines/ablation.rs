//! Ablation variants and the average-drop summary.

use std::fmt;

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::strategy::{score_with_strategy, DimensionSet, StrategyError, WeightingStrategy};
use crate::dims::{Dimension, Dims};
use crate::engine::WeightVector;
use crate::evalkit::{pearson, spearman, MetricError};
use crate::scalar::{from_usize, Field};
use crate::Rational;

/// `100 · mean(|Δpearson|, |Δspearman|)`, a percentage-point drop.
pub fn avg_drop<F: Field>(full: (F, F), variant: (F, F)) -> F {
    let dp = (full.0 - variant.0).abs();
    let ds = (full.1 - variant.1).abs();
    (dp + ds) * from_usize::<F>(50)
}

/// Parses a plain decimal such as `.938`, `-0.25` or `3` exactly.
pub fn decimal(text: &str) -> Option<Rational> {
    let t = text.trim();
    let (neg, t) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let (int, frac) = t.split_once('.').unwrap_or((t, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("0{int}{frac}").parse().ok()?;
    let value = Rational::new(digits, BigInt::from(10).pow(frac.len() as u32));
    Some(if neg { -value } else { value })
}

/// Rounds half away from zero to `places` decimals and formats.
pub fn format_decimal(value: &Rational, places: u32) -> String {
    let scale = BigInt::from(10).pow(places);
    let scaled = value * Rational::from_integer(scale.clone());
    let rounded = scaled.round().to_integer();
    let neg = rounded < BigInt::zero();
    let digits = rounded.abs().to_string();
    let width = places as usize + 1;
    let digits = format!("{digits:0>width$}");
    let (int, frac) = digits.split_at(digits.len() - places as usize);
    let sign = if neg { "-" } else { "" };
    if places == 0 {
        format!("{sign}{int}")
    } else {
        format!("{sign}{int}.{frac}")
    }
}

fn rational_of(value: f64, places: u32) -> Rational {
    // Metrics are compared as displayed, i.e. after rounding.
    let text = format!("{value:.*}", places as usize);
    decimal(&text).expect("formatted float is a decimal")
}

/// The seven reduced configurations plus the full model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    Full,
    Equal,
    WithoutClaim,
    WithoutTechnical,
    WithoutDomain,
    OnlyClaim,
    OnlyTechnical,
    OnlyDomain,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 8] = [
        AblationVariant::Full,
        AblationVariant::Equal,
        AblationVariant::WithoutClaim,
        AblationVariant::WithoutTechnical,
        AblationVariant::WithoutDomain,
        AblationVariant::OnlyClaim,
        AblationVariant::OnlyTechnical,
        AblationVariant::OnlyDomain,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AblationVariant::Full => "Full",
            AblationVariant::Equal => "Equal Weighting",
            AblationVariant::WithoutClaim => "w/o Claim Scope Dimension",
            AblationVariant::WithoutTechnical => "w/o Technical Dimension",
            AblationVariant::WithoutDomain => "w/o Application Dimension",
            AblationVariant::OnlyClaim => "Claim Scope Dimension Only",
            AblationVariant::OnlyTechnical => "Technical Dimension Only",
            AblationVariant::OnlyDomain => "Application Dimension Only",
        }
    }

    pub fn strategy(self) -> WeightingStrategy<f64> {
        use AblationVariant::*;
        match self {
            Full => WeightingStrategy::Dynamic,
            Equal => WeightingStrategy::Equal,
            WithoutClaim => WeightingStrategy::SubsetOnly(DimensionSet::without(Dimension::Claim)),
            WithoutTechnical => WeightingStrategy::SubsetOnly(DimensionSet::without(Dimension::Technical)),
            WithoutDomain => WeightingStrategy::SubsetOnly(DimensionSet::without(Dimension::Domain)),
            OnlyClaim => WeightingStrategy::SubsetOnly(DimensionSet::only(Dimension::Claim)),
            OnlyTechnical => WeightingStrategy::SubsetOnly(DimensionSet::only(Dimension::Technical)),
            OnlyDomain => WeightingStrategy::SubsetOnly(DimensionSet::only(Dimension::Domain)),
        }
    }

    fn group(self) -> Option<&'static str> {
        match self {
            AblationVariant::WithoutClaim | AblationVariant::WithoutTechnical | AblationVariant::WithoutDomain => {
                Some("Average (Two Dimension)")
            }
            AblationVariant::OnlyClaim | AblationVariant::OnlyTechnical | AblationVariant::OnlyDomain => {
                Some("Average (Single Dimension)")
            }
            _ => None,
        }
    }
}

impl fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Per-pair inputs: dimension scores, the graph's weights and the gold score.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationInput {
    pub scores: Dims<f64>,
    pub dynamic: WeightVector<f64>,
    pub gold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Option<AblationVariant>,
    pub label: String,
    pub pearson: f64,
    pub spearman: f64,
    /// Drop against the full model, as a 2-decimal string; absent for the full row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_drop: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub n: usize,
    /// Full model then the seven variants.
    pub rows: Vec<AblationRow>,
    /// Group means for the two-dimension and single-dimension variants.
    pub averages: Vec<AblationRow>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AblationError {
    #[error("{variant}: {source}")]
    Metric { variant: AblationVariant, source: MetricError },
    #[error(transparent)]
    Strategy(#[from] StrategyError),
}

/// Metric pair rounded to 3 decimals, as exact rationals.
fn shown(p: f64, s: f64) -> (Rational, Rational) {
    (rational_of(p, 3), rational_of(s, 3))
}

/// Scores every variant and tabulates correlations and average drops.
///
/// Drops are computed from the 3-decimal correlations, the precision the
/// table is printed at, so they can be recomputed from the table itself.
pub fn ablation_table(inputs: &[AblationInput]) -> Result<AblationTable, AblationError> {
    let gold: Vec<f64> = inputs.iter().map(|i| i.gold).collect();
    let mut measured = Vec::new();
    for variant in AblationVariant::ALL {
        let strategy = variant.strategy();
        let pred = inputs
            .iter()
            .map(|i| score_with_strategy(&i.scores, &strategy, Some(&i.dynamic)))
            .collect::<Result<Vec<f64>, _>>()?;
        let metric = |e| AblationError::Metric { variant, source: e };
        let p = pearson(&pred, &gold).map_err(metric)?;
        let s = spearman(&pred, &gold).map_err(metric)?;
        measured.push((variant, p, s));
    }
    Ok(table_from_metrics(inputs.len(), &measured))
}

/// Builds the table from already-measured (variant, pearson, spearman) triples.
/// The first triple must be the full model.
pub fn table_from_metrics(n: usize, measured: &[(AblationVariant, f64, f64)]) -> AblationTable {
    let full = measured
        .iter()
        .find(|m| m.0 == AblationVariant::Full)
        .map(|m| shown(m.1, m.2))
        .unwrap_or_else(|| (Rational::zero(), Rational::zero()));
    let mut rows = Vec::new();
    let mut groups: Vec<(&'static str, Vec<(Rational, Rational, Rational)>)> = Vec::new();
    for &(variant, p, s) in measured {
        let exact = shown(p, s);
        let drop = (variant != AblationVariant::Full).then(|| avg_drop(full.clone(), exact.clone()));
        rows.push(AblationRow {
            variant: Some(variant),
            label: variant.label().to_string(),
            pearson: p,
            spearman: s,
            avg_drop: drop.as_ref().map(|d| format_decimal(d, 2)),
        });
        if let (Some(name), Some(d)) = (variant.group(), drop) {
            match groups.iter_mut().find(|g| g.0 == name) {
                Some(g) => g.1.push((exact.0, exact.1, d)),
                None => groups.push((name, vec![(exact.0, exact.1, d)])),
            }
        }
    }
    let averages = groups
        .into_iter()
        .map(|(name, members)| {
            let k = Rational::from_integer(BigInt::from(members.len()));
            let mean = |f: fn(&(Rational, Rational, Rational)) -> Rational| {
                members.iter().map(f).fold(Rational::zero(), |a, b| a + b) / k.clone()
            };
            AblationRow {
                variant: None,
                label: name.to_string(),
                pearson: mean(|m| m.0.clone()).to_f64().unwrap_or(f64::NAN),
                spearman: mean(|m| m.1.clone()).to_f64().unwrap_or(f64::NAN),
                avg_drop: Some(format_decimal(&mean(|m| m.2.clone()), 2)),
            }
        })
        .collect();
    AblationTable { n, rows, averages }
}

impl AblationTable {
    /// Fixed-width text layout: label, Pearson, Spearman, Avg. Drop (%).
    pub fn to_text(&self) -> String {
        let mut out = format!("{:<32} {:>8} {:>8} {:>14}\n", "Model", "Pearson", "Spearman", "Avg. Drop (%)");
        let line = |r: &AblationRow| {
            format!(
                "{:<32} {:>8.3} {:>8.3} {:>14}\n",
                r.label,
                r.pearson,
                r.spearman,
                r.avg_drop.as_deref().unwrap_or("--")
            )
        };
        for r in &self.rows {
            out.push_str(&line(r));
            if r.variant == Some(AblationVariant::WithoutDomain) || r.variant == Some(AblationVariant::OnlyDomain) {
                let group = r.variant.and_then(AblationVariant::group);
                if let Some(avg) = self.averages.iter().find(|a| Some(a.label.as_str()) == group) {
                    out.push_str(&line(avg));
                }
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,pearson,spearman,avg_drop_pct\n");
        for r in self.rows.iter().chain(&self.averages) {
            out.push_str(&format!(
                "{},{:.3},{:.3},{}\n",
                r.label,
                r.pearson,
                r.spearman,
                r.avg_drop.as_deref().unwrap_or("")
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn d(s: &str) -> Rational {
        decimal(s).unwrap()
    }

    fn drop_of(full: (&str, &str), variant: (&str, &str)) -> String {
        format_decimal(&avg_drop((d(full.0), d(full.1)), (d(variant.0), d(variant.1))), 2)
    }

    #[test]
    fn published_rows_reproduce() {
        let full = (".938", ".923");
        for (p, s, expected) in [
            (".904", ".890", "3.35"),
            (".912", ".906", "2.15"),
            (".901", ".898", "3.10"),
            (".903", ".894", "3.20"),
            (".903", ".905", "2.65"),
            (".908", ".912", "2.05"),
            (".865", ".848", "7.40"),
        ] {
            assert_eq!(drop_of(full, (p, s)), expected, "{p} {s}");
        }
        let exact = avg_drop((d(".938"), d(".923")), (d(".904"), d(".890")));
        assert_eq!(exact, Rational::new(67.into(), 20.into()));
    }

    #[test]
    fn zero_drop_and_f64() {
        assert_eq!(drop_of((".938", ".923"), (".938", ".923")), "0.00");
        let f = avg_drop((0.938, 0.923), (0.938, 0.923));
        assert_eq!(f, 0.0);
        assert!((avg_drop((0.938, 0.923), (0.904, 0.890)) - 3.35).abs() < 1e-9);
    }

    #[test]
    fn decimals() {
        assert_eq!(d(".5"), Rational::new(1.into(), 2.into()));
        assert_eq!(d("-0.25"), Rational::new((-1).into(), 4.into()));
        assert_eq!(d("3"), Rational::from_integer(3.into()));
        assert!(decimal("").is_none() && decimal("1e3").is_none() && decimal(".").is_none());
        assert_eq!(format_decimal(&d("2.815"), 2), "2.82");
        assert_eq!(format_decimal(&d("-2.815"), 2), "-2.82");
        assert_eq!(format_decimal(&d("0.004"), 2), "0.00");
        assert_eq!(format_decimal(&d("12.5"), 0), "13");
    }

    #[test]
    fn published_table_layout() {
        let measured = [
            (AblationVariant::Full, 0.938, 0.923),
            (AblationVariant::Equal, 0.904, 0.890),
            (AblationVariant::WithoutClaim, 0.912, 0.906),
            (AblationVariant::WithoutTechnical, 0.901, 0.898),
            (AblationVariant::WithoutDomain, 0.903, 0.894),
            (AblationVariant::OnlyClaim, 0.903, 0.905),
            (AblationVariant::OnlyTechnical, 0.908, 0.912),
            (AblationVariant::OnlyDomain, 0.865, 0.848),
        ];
        let t = table_from_metrics(500, &measured);
        assert_eq!(t.rows.len(), 8);
        assert_eq!(t.rows[0].avg_drop, None);
        let drops: Vec<&str> = t.rows[1..].iter().map(|r| r.avg_drop.as_deref().unwrap()).collect();
        assert_eq!(drops, ["3.35", "2.15", "3.10", "3.20", "2.65", "2.05", "7.40"]);
        assert_eq!(t.averages[0].avg_drop.as_deref(), Some("2.82"));
        assert_eq!(t.averages[1].avg_drop.as_deref(), Some("4.03"));
        assert_eq!(format!("{:.3}", t.averages[0].pearson), "0.905");
        assert_eq!(format!("{:.3}", t.averages[0].spearman), "0.899");
        assert_eq!(format!("{:.3}", t.averages[1].pearson), "0.892");
        assert_eq!(format!("{:.3}", t.averages[1].spearman), "0.888");
        let text = t.to_text();
        assert_eq!(text.lines().count(), 11);
        assert_eq!(t.to_csv().lines().count(), 11);
    }

    #[test]
    fn identical_variants_drop_nothing() {
        // Every dimension carries the same score, so all variants coincide.
        let inputs: Vec<AblationInput> = [0.1, 0.4, 0.35, 0.8, 0.9]
            .iter()
            .zip([0.2, 0.3, 0.5, 0.7, 1.0])
            .map(|(&s, g)| AblationInput {
                scores: Dims::new(s, s, s),
                dynamic: WeightVector::equal(),
                gold: g,
            })
            .collect();
        let t = ablation_table(&inputs).unwrap();
        assert_eq!(t.rows.len(), 8);
        assert!(t.rows[1..].iter().all(|r| r.avg_drop.as_deref() == Some("0.00")));
    }

    proptest! {
        #[test]
        fn avg_drop_symmetric(a in -1000i64..1000, b in -1000i64..1000, c in -1000i64..1000, e in -1000i64..1000) {
            let r = |v: i64| Rational::new(v.into(), 1000.into());
            let x = avg_drop((r(a), r(b)), (r(c), r(e)));
            let y = avg_drop((r(c), r(e)), (r(a), r(b)));
            prop_assert_eq!(&x, &y);
            prop_assert_eq!(x.is_zero(), a == c && b == e);
        }
    }
}
