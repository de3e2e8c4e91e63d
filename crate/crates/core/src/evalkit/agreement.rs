//! Inter-annotator agreement. Both statistics are written against [`Field`]
//! so integer ratings can be evaluated exactly over rationals.

use serde::{Deserialize, Serialize};

use crate::scalar::{from_usize, Field};
use crate::Rational;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AgreementError {
    #[error("no items")]
    Empty,
    #[error("item {item} has {got} ratings, expected {expected}")]
    UnequalRaterCounts { item: usize, expected: usize, got: usize },
    #[error("need at least 2 raters, got {0}")]
    TooFewRaters(usize),
    #[error("need at least 2 items, got {0}")]
    TooFewItems(usize),
    #[error("expected agreement is 1; kappa undefined")]
    DegenerateAgreement,
    #[error("total-score variance is zero; alpha undefined")]
    ZeroTotalVariance,
    #[error("rating {0} outside 1..=5")]
    OutOfRange(u8),
}

/// Fleiss' κ from an items × categories count matrix.
pub fn fleiss_kappa<F: Field>(counts: &[Vec<u64>]) -> Result<F, AgreementError> {
    if counts.is_empty() {
        return Err(AgreementError::Empty);
    }
    let n_raters: u64 = counts[0].iter().sum();
    let categories = counts[0].len();
    for (item, row) in counts.iter().enumerate() {
        let got: u64 = row.iter().sum();
        if got != n_raters || row.len() != categories {
            return Err(AgreementError::UnequalRaterCounts {
                item,
                expected: n_raters as usize,
                got: got as usize,
            });
        }
    }
    if n_raters < 2 {
        return Err(AgreementError::TooFewRaters(n_raters as usize));
    }
    let n: F = from_usize(n_raters as usize);
    let items: F = from_usize(counts.len());
    let one = F::one();

    let mut p_bar = F::zero();
    for row in counts {
        let sq: u64 = row.iter().map(|c| c * c).sum();
        let p_i = (from_usize::<F>(sq as usize) - n.clone()) / (n.clone() * (n.clone() - one.clone()));
        p_bar = p_bar + p_i;
    }
    p_bar = p_bar / items.clone();

    let mut p_e = F::zero();
    for j in 0..categories {
        let col: u64 = counts.iter().map(|row| row[j]).sum();
        let p_j = from_usize::<F>(col as usize) / (items.clone() * n.clone());
        p_e = p_e + p_j.clone() * p_j;
    }

    if p_bar == one {
        return Ok(one);
    }
    if p_e == one {
        return Err(AgreementError::DegenerateAgreement);
    }
    Ok((p_bar - p_e.clone()) / (one - p_e))
}

fn sample_variance<F: Field>(values: &[F]) -> F {
    let n: F = from_usize(values.len());
    let mean = values.iter().cloned().fold(F::zero(), |a, b| a + b) / n.clone();
    let ss = values
        .iter()
        .map(|v| (v.clone() - mean.clone()) * (v.clone() - mean.clone()))
        .fold(F::zero(), |a, b| a + b);
    ss / (n - F::one())
}

/// Cronbach's α over a raters × items score matrix, raters as instruments.
pub fn cronbach_alpha<F: Field>(scores: &[Vec<F>]) -> Result<F, AgreementError> {
    let k = scores.len();
    if k < 2 {
        return Err(AgreementError::TooFewRaters(k));
    }
    let items = scores[0].len();
    for (rater, row) in scores.iter().enumerate() {
        if row.len() != items {
            return Err(AgreementError::UnequalRaterCounts {
                item: rater,
                expected: items,
                got: row.len(),
            });
        }
    }
    if items < 2 {
        return Err(AgreementError::TooFewItems(items));
    }
    let totals: Vec<F> = (0..items)
        .map(|i| scores.iter().map(|r| r[i].clone()).fold(F::zero(), |a, b| a + b))
        .collect();
    let total_var = sample_variance(&totals);
    if total_var == F::zero() {
        return Err(AgreementError::ZeroTotalVariance);
    }
    let item_var = scores
        .iter()
        .map(|r| sample_variance(r))
        .fold(F::zero(), |a, b| a + b);
    let kf: F = from_usize(k);
    Ok(kf.clone() / (kf - F::one()) * (F::one() - item_var / total_var))
}

/// Items × 5 category counts from per-item Likert ratings.
pub fn likert_counts(ratings: &[Vec<u8>]) -> Result<Vec<Vec<u64>>, AgreementError> {
    ratings
        .iter()
        .map(|row| {
            let mut counts = vec![0u64; 5];
            for &r in row {
                if !(1..=5).contains(&r) {
                    return Err(AgreementError::OutOfRange(r));
                }
                counts[(r - 1) as usize] += 1;
            }
            Ok(counts)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub fleiss_kappa: f64,
    pub cronbach_alpha: f64,
    pub n_items: usize,
    pub n_raters: usize,
}

/// κ and α for per-item Likert ratings (`ratings[item][rater]`), computed exactly.
pub fn agreement_report(ratings: &[Vec<u8>]) -> Result<AgreementReport, AgreementError> {
    if ratings.is_empty() {
        return Err(AgreementError::Empty);
    }
    let n_raters = ratings[0].len();
    let kappa: Rational = fleiss_kappa(&likert_counts(ratings)?)?;
    let by_rater: Vec<Vec<Rational>> = (0..n_raters)
        .map(|r| {
            ratings
                .iter()
                .map(|item| Rational::from_integer(item[r].into()))
                .collect()
        })
        .collect();
    let alpha: Rational = cronbach_alpha(&by_rater)?;
    Ok(AgreementReport {
        fleiss_kappa: num_traits::ToPrimitive::to_f64(&kappa).unwrap_or(f64::NAN),
        cronbach_alpha: num_traits::ToPrimitive::to_f64(&alpha).unwrap_or(f64::NAN),
        n_items: ratings.len(),
        n_raters,
    })
}
