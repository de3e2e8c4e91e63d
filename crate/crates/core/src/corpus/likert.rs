use super::{AnnotatedPair, CorpusError};
use crate::scalar::{from_usize, Real};

/// Pairs whose rating standard deviation exceeds this are dropped.
pub const QC_MAX_STD_DEV: f64 = 2.0;

/// Maps the mean of 1-5 ratings onto [0, 1] as `(mean - 1) / 4`.
pub fn normalize_likert<T: Real>(ratings: &[u8]) -> Result<T, CorpusError> {
    if ratings.is_empty() {
        return Err(CorpusError::EmptyRatings);
    }
    if let Some(&bad) = ratings.iter().find(|r| !(1..=5).contains(*r)) {
        return Err(CorpusError::OutOfRangeRating(bad.into()));
    }
    let sum: usize = ratings.iter().map(|&r| usize::from(r)).sum();
    // (sum/n - 1)/4 == (sum - n) / (4n); integer numerator keeps singletons exact.
    let numerator: T = from_usize(sum - ratings.len());
    let denominator: T = from_usize(4 * ratings.len());
    Ok(numerator / denominator)
}

/// Sample (n - 1) standard deviation.
pub fn sample_std_dev(ratings: &[u8]) -> f64 {
    let n = ratings.len();
    if n < 2 {
        return 0.0;
    }
    let values: Vec<f64> = ratings.iter().map(|&r| f64::from(r)).collect();
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Splits pairs into (kept, excluded) by the rating-spread rule, preserving order.
pub fn qc_filter(pairs: Vec<AnnotatedPair>) -> Result<(Vec<AnnotatedPair>, Vec<AnnotatedPair>), CorpusError> {
    if let Some(p) = pairs.iter().find(|p| p.ratings.len() < 2) {
        return Err(CorpusError::TooFewRatings {
            pair_id: p.pair_id().to_string(),
            count: p.ratings.len(),
        });
    }
    Ok(pairs
        .into_iter()
        .partition(|p| sample_std_dev(&p.ratings) <= QC_MAX_STD_DEV))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::testing::pair;

    #[test]
    fn likert_examples() {
        assert_eq!(normalize_likert::<f64>(&[5, 5, 5, 5]).unwrap(), 1.0);
        assert_eq!(normalize_likert::<f64>(&[3]).unwrap(), 0.5);
        let v: f64 = normalize_likert(&[4, 4, 5]).unwrap();
        assert!((v - 0.8333).abs() < 1e-4);
        assert_eq!(format!("{v:.3}"), "0.833");
    }

    #[test]
    fn singletons_map_exactly() {
        let got: Vec<f64> = (1..=5).map(|r| normalize_likert(&[r]).unwrap()).collect();
        assert_eq!(got, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let got32: Vec<f32> = (1..=5).map(|r| normalize_likert(&[r]).unwrap()).collect();
        assert_eq!(got32, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn likert_errors() {
        assert!(matches!(normalize_likert::<f64>(&[]), Err(CorpusError::EmptyRatings)));
        assert!(matches!(normalize_likert::<f64>(&[3, 6]), Err(CorpusError::OutOfRangeRating(6))));
        assert!(matches!(normalize_likert::<f64>(&[0]), Err(CorpusError::OutOfRangeRating(0))));
    }

    #[test]
    fn std_dev_hand_values() {
        // mean 4.5, squared deviations sum to 1, / 3
        assert!((sample_std_dev(&[4, 4, 5, 5]) - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        // mean 3, deviations 4 each, 16 / 3
        assert!((sample_std_dev(&[1, 5, 1, 5]) - (16.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(sample_std_dev(&[3, 3, 3, 3]), 0.0);
    }

    #[test]
    fn qc_examples() {
        let mk = |id: &str, r: Vec<u8>| AnnotatedPair::from_ratings(pair(id, "G06F"), r).unwrap();
        let input = vec![mk("p1", vec![4, 4, 5, 5]), mk("p2", vec![1, 5, 1, 5]), mk("p3", vec![3, 3, 3, 3])];
        let (kept, excluded) = qc_filter(input).unwrap();
        let ids = |v: &[AnnotatedPair]| v.iter().map(|p| p.pair_id().to_string()).collect::<Vec<_>>();
        assert_eq!(ids(&kept), vec!["p1", "p3"]);
        assert_eq!(ids(&excluded), vec!["p2"]);
    }

    #[test]
    fn qc_requires_two_ratings() {
        let one = AnnotatedPair::from_ratings(pair("p1", "G06F"), vec![3]).unwrap();
        assert!(matches!(qc_filter(vec![one]), Err(CorpusError::TooFewRatings { count: 1, .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn qc_partitions_input(ratings in prop::collection::vec(prop::collection::vec(1u8..=5, 2..6), 0..20)) {
                let pairs: Vec<AnnotatedPair> = ratings
                    .iter()
                    .enumerate()
                    .map(|(i, r)| AnnotatedPair::from_ratings(pair(&format!("p{i}"), "A01B"), r.clone()).unwrap())
                    .collect();
                let (kept, excluded) = qc_filter(pairs.clone()).unwrap();
                prop_assert_eq!(kept.len() + excluded.len(), pairs.len());
                prop_assert!(kept.iter().all(|p| sample_std_dev(&p.ratings) <= 2.0));
                prop_assert!(excluded.iter().all(|p| sample_std_dev(&p.ratings) > 2.0));
                let mut merged: Vec<_> = kept.iter().chain(excluded.iter()).map(|p| p.pair_id().to_string()).collect();
                merged.sort();
                let mut all: Vec<_> = pairs.iter().map(|p| p.pair_id().to_string()).collect();
                all.sort();
                prop_assert_eq!(merged, all);
            }
        }
    }
}
