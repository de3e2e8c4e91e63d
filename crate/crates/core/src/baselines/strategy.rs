use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::dims::{Dimension, Dims};
use crate::engine::{combine, normalize_weights, WeightError, WeightVector};
use crate::scalar::{from_usize, Real};

/// A non-empty set of dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DimensionSet(BTreeSet<Dimension>);

impl DimensionSet {
    pub fn new(dims: impl IntoIterator<Item = Dimension>) -> Result<Self, StrategyError> {
        let set: BTreeSet<Dimension> = dims.into_iter().collect();
        if set.is_empty() {
            return Err(StrategyError::EmptySubset);
        }
        Ok(DimensionSet(set))
    }

    pub fn only(dim: Dimension) -> Self {
        DimensionSet(BTreeSet::from([dim]))
    }

    /// Every dimension except `dim`.
    pub fn without(dim: Dimension) -> Self {
        DimensionSet(Dimension::ALL.into_iter().filter(|d| *d != dim).collect())
    }

    pub fn contains(&self, dim: Dimension) -> bool {
        self.0.contains(&dim)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn iter(&self) -> impl Iterator<Item = Dimension> + '_ {
        self.0.iter().copied()
    }
}

/// How dimension scores are turned into one similarity.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightingStrategy<T = f64> {
    /// Per-pair weights from the reasoning graph.
    Dynamic,
    /// One third each.
    Equal,
    /// Uniform weights over the included dimensions, zero elsewhere.
    SubsetOnly(DimensionSet),
    Fixed(WeightVector<T>),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StrategyError {
    #[error("dimension subset is empty")]
    EmptySubset,
    #[error("dynamic weighting needs weights from the reasoning graph")]
    MissingDynamicWeights,
    #[error(transparent)]
    Weights(#[from] WeightError),
    #[error("cannot parse strategy `{0}`")]
    Syntax(String),
}

impl<T: Real> WeightingStrategy<T> {
    /// Weights this strategy applies. `dynamic` is only read for [`WeightingStrategy::Dynamic`].
    pub fn weights(&self, dynamic: Option<&WeightVector<T>>) -> Result<WeightVector<T>, StrategyError> {
        match self {
            WeightingStrategy::Dynamic => dynamic.cloned().ok_or(StrategyError::MissingDynamicWeights),
            WeightingStrategy::Equal => Ok(WeightVector::equal()),
            WeightingStrategy::SubsetOnly(set) => {
                let share = T::one() / from_usize::<T>(set.len());
                let pick = |d| if set.contains(d) { share } else { T::zero() };
                Ok(WeightVector {
                    w_t: pick(Dimension::Technical),
                    w_d: pick(Dimension::Domain),
                    w_c: pick(Dimension::Claim),
                    justification: String::new(),
                })
            }
            WeightingStrategy::Fixed(w) => Ok(w.clone()),
        }
    }

    pub fn is_dynamic(&self) -> bool {
        matches!(self, WeightingStrategy::Dynamic)
    }
}

/// Combined score under `strategy`, rounded to three decimals.
pub fn score_with_strategy<T: Real>(
    scores: &Dims<T>,
    strategy: &WeightingStrategy<T>,
    dynamic: Option<&WeightVector<T>>,
) -> Result<T, StrategyError> {
    Ok(combine(scores, &strategy.weights(dynamic)?))
}

impl<T: Real> fmt::Display for WeightingStrategy<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightingStrategy::Dynamic => f.write_str("dynamic"),
            WeightingStrategy::Equal => f.write_str("equal"),
            WeightingStrategy::SubsetOnly(set) => {
                let names: Vec<&str> = set.iter().map(Dimension::as_str).collect();
                write!(f, "subset:{}", names.join(","))
            }
            WeightingStrategy::Fixed(w) => write!(f, "fixed:{},{},{}", w.w_t, w.w_d, w.w_c),
        }
    }
}

/// Accepts `dynamic`, `equal`, `subset:technical,claim`, `only:technical`,
/// `without:domain` and `fixed:0.5,0.3,0.2` (normalized on parse).
impl<T: Real> FromStr for WeightingStrategy<T> {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        let syntax = || StrategyError::Syntax(s.clone());
        let (head, tail) = match s.split_once(':') {
            Some((h, t)) => (h.trim(), Some(t.trim())),
            None => (s.as_str(), None),
        };
        let dims = |t: &str| -> Result<Vec<Dimension>, StrategyError> {
            t.split(',').map(|d| d.parse::<Dimension>().map_err(|_| syntax())).collect()
        };
        match (head, tail) {
            ("dynamic" | "marg", None) => Ok(WeightingStrategy::Dynamic),
            ("equal", None) => Ok(WeightingStrategy::Equal),
            ("subset" | "only", Some(t)) => Ok(WeightingStrategy::SubsetOnly(DimensionSet::new(dims(t)?)?)),
            ("without", Some(t)) => {
                let drop = dims(t)?;
                DimensionSet::new(Dimension::ALL.into_iter().filter(|d| !drop.contains(d))).map(WeightingStrategy::SubsetOnly)
            }
            ("fixed", Some(t)) => {
                let parts: Vec<T> = t
                    .split(',')
                    .map(|v| v.trim().parse::<f64>().ok().and_then(T::from_f64).ok_or_else(syntax))
                    .collect::<Result<_, _>>()?;
                let [a, b, c] = parts[..] else { return Err(syntax()) };
                Ok(WeightingStrategy::Fixed(normalize_weights(Dims::new(a, b, c))?))
            }
            _ => Err(syntax()),
        }
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn s(t: f64, d: f64, c: f64) -> Dims<f64> {
        Dims::new(t, d, c)
    }

    #[test]
    fn strategy_examples() {
        let scores = s(0.9, 0.6, 0.3);
        let eq = score_with_strategy(&scores, &WeightingStrategy::Equal, None).unwrap();
        assert_eq!(eq, 0.6);
        let only_t = WeightingStrategy::SubsetOnly(DimensionSet::only(Dimension::Technical));
        assert_eq!(score_with_strategy(&scores, &only_t, None).unwrap(), 0.9);
        let tc = WeightingStrategy::SubsetOnly(DimensionSet::without(Dimension::Domain));
        assert_eq!(score_with_strategy(&scores, &tc, None).unwrap(), 0.6);
    }

    #[test]
    fn dynamic_needs_weights() {
        let scores = s(0.8, 0.6, 0.4);
        assert_eq!(
            score_with_strategy(&scores, &WeightingStrategy::Dynamic, None),
            Err(StrategyError::MissingDynamicWeights)
        );
        let w = normalize_weights(s(0.5, 0.3, 0.2)).unwrap();
        assert_eq!(score_with_strategy(&scores, &WeightingStrategy::Dynamic, Some(&w)).unwrap(), 0.66);
    }

    #[test]
    fn empty_subset_rejected() {
        assert_eq!(DimensionSet::new([]), Err(StrategyError::EmptySubset));
        assert!("without:technical,domain,claim".parse::<WeightingStrategy>().is_err());
    }

    #[test]
    fn parse_and_display() {
        for text in ["dynamic", "equal", "subset:technical,claim", "subset:domain"] {
            let parsed: WeightingStrategy = text.parse().unwrap();
            assert_eq!(parsed.to_string(), text);
        }
        let w: WeightingStrategy = "without:domain".parse().unwrap();
        assert_eq!(w.to_string(), "subset:technical,claim");
        let f: WeightingStrategy = "fixed:2,1,1".parse().unwrap();
        assert_eq!(f.to_string(), "fixed:0.5,0.25,0.25");
        assert!("fixed:1,2".parse::<WeightingStrategy>().is_err());
        assert!("bogus".parse::<WeightingStrategy>().is_err());
    }

    proptest! {
        #[test]
        fn equal_matches_fixed_thirds(t in 0.0f64..1.0, d in 0.0f64..1.0, c in 0.0f64..1.0) {
            let scores = s(t, d, c);
            let fixed = WeightingStrategy::Fixed(WeightVector::equal());
            prop_assert_eq!(
                score_with_strategy(&scores, &WeightingStrategy::Equal, None).unwrap(),
                score_with_strategy(&scores, &fixed, None).unwrap()
            );
        }
    }
}
