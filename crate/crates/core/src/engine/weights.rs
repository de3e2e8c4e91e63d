use serde::{Deserialize, Serialize};

use crate::dims::{Dimension, Dims};
use crate::scalar::{lit, round3, Real};

/// Convex weights over the three similarity dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector<T = f64> {
    pub w_t: T,
    pub w_d: T,
    pub w_c: T,
    #[serde(default)]
    pub justification: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WeightError {
    #[error("weights must be finite and non-negative")]
    Negative,
    #[error("weights sum to zero")]
    DegenerateWeights,
}

impl<T: Real> WeightVector<T> {
    pub fn equal() -> Self {
        let third = T::one() / lit::<T>(3.0);
        WeightVector {
            w_t: third,
            w_d: third,
            w_c: third,
            justification: String::new(),
        }
    }

    pub fn with_justification(mut self, justification: impl Into<String>) -> Self {
        self.justification = justification.into();
        self
    }

    pub fn get(&self, dim: Dimension) -> T {
        match dim {
            Dimension::Technical => self.w_t,
            Dimension::Domain => self.w_d,
            Dimension::Claim => self.w_c,
        }
    }

    pub fn as_dims(&self) -> Dims<T> {
        Dims::new(self.w_t, self.w_d, self.w_c)
    }

    pub fn sum(&self) -> T {
        self.w_t + self.w_d + self.w_c
    }
}

/// Divides each raw weight by the total.
pub fn normalize_weights<T: Real>(raw: Dims<T>) -> Result<WeightVector<T>, WeightError> {
    let values = raw.to_array();
    if values.iter().any(|v| !v.is_finite() || *v < T::zero()) {
        return Err(WeightError::Negative);
    }
    let total: T = values.iter().copied().sum();
    if total <= T::zero() {
        return Err(WeightError::DegenerateWeights);
    }
    Ok(WeightVector {
        w_t: values[0] / total,
        w_d: values[1] / total,
        w_c: values[2] / total,
        justification: String::new(),
    })
}

/// `w_T·S_T + w_D·S_D + w_C·S_C` without rounding.
pub fn weighted_sum<T: Real>(scores: &Dims<T>, weights: &WeightVector<T>) -> T {
    weights.w_t * scores.technical + weights.w_d * scores.domain + weights.w_c * scores.claim
}

/// Weighted sum rounded to three decimals.
pub fn combine<T: Real>(scores: &Dims<T>, weights: &WeightVector<T>) -> T {
    round3(weighted_sum(scores, weights))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn w(t: f64, d: f64, c: f64) -> WeightVector<f64> {
        WeightVector {
            w_t: t,
            w_d: d,
            w_c: c,
            justification: String::new(),
        }
    }

    #[test]
    fn normalize_examples() {
        let eq = normalize_weights(Dims::new(1.0, 1.0, 1.0)).unwrap();
        assert_eq!((eq.w_t, eq.w_d, eq.w_c), (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0));
        let n = normalize_weights(Dims::new(2.0, 1.0, 1.0)).unwrap();
        assert_eq!((n.w_t, n.w_d, n.w_c), (0.5, 0.25, 0.25));
        assert_eq!(normalize_weights(Dims::new(0.0, 0.0, 0.0)), Err(WeightError::DegenerateWeights));
        assert_eq!(normalize_weights(Dims::new(-0.1, 0.5, 0.6)), Err(WeightError::Negative));
    }

    #[test]
    fn combine_examples() {
        assert_eq!(combine(&Dims::new(1.0, 1.0, 1.0), &w(0.2, 0.5, 0.3)), 1.0);
        assert_eq!(combine(&Dims::new(0.8, 0.6, 0.4), &WeightVector::equal()), 0.6);
        assert_eq!(combine(&Dims::new(0.9, 0.2, 0.7), &w(0.6, 0.1, 0.3)), 0.77);
        // 0.4 + 0.18 + 0.08
        assert_eq!(combine(&Dims::new(0.8, 0.6, 0.4), &w(0.5, 0.3, 0.2)), 0.66);
        assert_eq!(combine(&Dims::new(0.8, 0.6, 0.4), &w(0.3, 0.3, 0.4)), 0.58);
    }

    #[test]
    fn combine_works_in_f32() {
        let s = Dims::new(0.9_f32, 0.2, 0.7);
        let weights = WeightVector {
            w_t: 0.6_f32,
            w_d: 0.1,
            w_c: 0.3,
            justification: String::new(),
        };
        assert_eq!(combine(&s, &weights), 0.77_f32);
    }

    proptest! {
        #[test]
        fn combination_is_convex(
            s in proptest::array::uniform3(0.0f64..=1.0),
            raw in proptest::array::uniform3(0.0f64..=10.0),
        ) {
            prop_assume!(raw.iter().sum::<f64>() > 1e-6);
            let weights = normalize_weights(Dims::from_array(raw)).unwrap();
            prop_assert!((weights.sum() - 1.0).abs() <= 1e-9);
            let v = weighted_sum(&Dims::from_array(s), &weights);
            let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }

        #[test]
        fn scaling_raw_weights_changes_nothing(
            s in proptest::array::uniform3(0.0f64..=1.0),
            raw in proptest::array::uniform3(0.01f64..=5.0),
            k in 0.01f64..100.0,
        ) {
            let a = normalize_weights(Dims::from_array(raw)).unwrap();
            let b = normalize_weights(Dims::from_array(raw.map(|x| x * k))).unwrap();
            let sa = weighted_sum(&Dims::from_array(s), &a);
            let sb = weighted_sum(&Dims::from_array(s), &b);
            prop_assert!((sa - sb).abs() <= 1e-12);
        }
    }
}
