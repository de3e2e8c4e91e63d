use serde::{Deserialize, Serialize};

use crate::scalar::{from_usize, lit, Real};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {need} observations, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("input is constant; correlation undefined")]
    ConstantInput,
}

fn check(x_len: usize, y_len: usize, need: usize) -> Result<(), MetricError> {
    if x_len != y_len {
        return Err(MetricError::LengthMismatch {
            left: x_len,
            right: y_len,
        });
    }
    if x_len < need {
        return Err(MetricError::TooFew { need, got: x_len });
    }
    Ok(())
}

fn mean<T: Real>(v: &[T]) -> T {
    v.iter().copied().sum::<T>() / from_usize(v.len())
}

/// Sample Pearson correlation.
pub fn pearson<T: Real>(x: &[T], y: &[T]) -> Result<T, MetricError> {
    check(x.len(), y.len(), 2)?;
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = T::zero();
    let mut sxx = T::zero();
    let mut syy = T::zero();
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Err(MetricError::ConstantInput);
    }
    let r = sxy / (sxx * syy).sqrt();
    Ok(r.max(-T::one()).min(T::one()))
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks<T: Real>(values: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("ranks of NaN"));
    let mut ranks = vec![T::zero(); values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share rank mean(i+1..=j+1)
        let rank = from_usize::<T>(i + j + 2) / lit(2.0);
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of average ranks.
pub fn spearman<T: Real>(x: &[T], y: &[T]) -> Result<T, MetricError> {
    check(x.len(), y.len(), 2)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics<T = f64> {
    pub mse: T,
    pub mae: T,
    pub rmse: T,
}

pub fn error_metrics<T: Real>(pred: &[T], gold: &[T]) -> Result<ErrorMetrics<T>, MetricError> {
    check(pred.len(), gold.len(), 1)?;
    let n: T = from_usize(pred.len());
    let mut se = T::zero();
    let mut ae = T::zero();
    for (&p, &g) in pred.iter().zip(gold) {
        let d = p - g;
        se += d * d;
        ae += d.abs();
    }
    let mse = se / n;
    Ok(ErrorMetrics {
        mse,
        mae: ae / n,
        rmse: mse.sqrt(),
    })
}

/// Correlation and error metrics of predictions against gold scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet<T = f64> {
    pub pearson: T,
    pub spearman: T,
    pub mse: T,
    pub mae: T,
    pub rmse: T,
    pub n: usize,
}

impl<T: Real> MetricSet<T> {
    pub fn compute(pred: &[T], gold: &[T]) -> Result<Self, MetricError> {
        let errors = error_metrics(pred, gold)?;
        Ok(MetricSet {
            pearson: pearson(pred, gold)?,
            spearman: spearman(pred, gold)?,
            mse: errors.mse,
            mae: errors.mae,
            rmse: errors.rmse,
            n: pred.len(),
        })
    }

    /// Component-wise mean, e.g. over cross-validation folds.
    pub fn mean_of(sets: &[MetricSet<T>]) -> Option<Self> {
        if sets.is_empty() {
            return None;
        }
        let k: T = from_usize(sets.len());
        let avg = |f: fn(&MetricSet<T>) -> T| sets.iter().map(f).sum::<T>() / k;
        Some(MetricSet {
            pearson: avg(|m| m.pearson),
            spearman: avg(|m| m.spearman),
            mse: avg(|m| m.mse),
            mae: avg(|m| m.mae),
            rmse: avg(|m| m.rmse),
            n: sets.iter().map(|m| m.n).sum(),
        })
    }
}
