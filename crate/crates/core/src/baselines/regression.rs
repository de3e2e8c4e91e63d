//! Linear fits of gold similarity on the three dimension scores.
//!
//! All methods work on column-centered data so the intercept is never
//! penalized. Ridge minimizes `Σ r² + λ‖b‖²`; lasso minimizes
//! `Σ r² / 2n + λ‖b‖₁`.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dims::Dims;
use crate::evalkit::MetricSet;
use crate::scalar::{from_usize, lit, Real};

pub const LASSO_TOLERANCE: f64 = 1e-10;
pub const LASSO_MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressionMethod<T = f64> {
    Ols,
    Ridge { lambda: T },
    Lasso { lambda: T },
}

impl<T: Real> RegressionMethod<T> {
    pub fn lambda(&self) -> T {
        match self {
            RegressionMethod::Ols => T::zero(),
            RegressionMethod::Ridge { lambda } | RegressionMethod::Lasso { lambda } => *lambda,
        }
    }

    /// `name` is `ols`, `ridge` or `lasso`.
    pub fn from_name(name: &str, lambda: T) -> Result<Self, RegressionError> {
        match name.trim().to_ascii_lowercase().as_str() {
            "ols" | "linear" => Ok(RegressionMethod::Ols),
            "ridge" => Ok(RegressionMethod::Ridge { lambda }),
            "lasso" => Ok(RegressionMethod::Lasso { lambda }),
            other => Err(RegressionError::UnknownMethod(other.to_string())),
        }
    }
}

impl<T: Real> fmt::Display for RegressionMethod<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegressionMethod::Ols => f.write_str("ols"),
            RegressionMethod::Ridge { lambda } => write!(f, "ridge({lambda})"),
            RegressionMethod::Lasso { lambda } => write!(f, "lasso({lambda})"),
        }
    }
}

/// `ols`, `ridge(0.1)` or `lasso(0.01)`.
impl<T: Real> FromStr for RegressionMethod<T> {
    type Err = RegressionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s.split_once('(') {
            None => RegressionMethod::from_name(s, T::zero()),
            Some((name, rest)) => {
                let value = rest
                    .strip_suffix(')')
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .and_then(T::from_f64)
                    .ok_or_else(|| RegressionError::UnknownMethod(s.to_string()))?;
                RegressionMethod::from_name(name, value)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegressionError {
    #[error("need at least {need} rows, got {got}")]
    TooFewRows { need: usize, got: usize },
    #[error("gold value {0} outside [0, 1]")]
    GoldOutOfRange(f64),
    #[error("lambda must be finite and non-negative, got {0}")]
    InvalidLambda(f64),
    #[error("design matrix is rank deficient")]
    SingularDesign,
    #[error("unknown regression method `{0}`")]
    UnknownMethod(String),
    #[error("need 1 <= k <= {rows} folds, got {k}")]
    InvalidFolds { k: usize, rows: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics<T = f64> {
    pub n: usize,
    pub train_mse: T,
    /// Coordinate descent sweeps; zero for closed-form fits.
    pub sweeps: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit<T = f64> {
    pub method: RegressionMethod<T>,
    pub coefficients: Dims<T>,
    pub intercept: T,
    pub diagnostics: FitDiagnostics<T>,
}

impl<T: Real> RegressionFit<T> {
    pub fn predict(&self, scores: &Dims<T>) -> T {
        self.intercept
            + self.coefficients.technical * scores.technical
            + self.coefficients.domain * scores.domain
            + self.coefficients.claim * scores.claim
    }
}

pub const MIN_ROWS: usize = 4;

struct Centered<T> {
    x: Vec<[T; 3]>,
    y: Vec<T>,
    x_mean: [T; 3],
    y_mean: T,
}

fn center<T: Real>(rows: &[(Dims<T>, T)]) -> Centered<T> {
    let n: T = from_usize(rows.len());
    let mut x_mean = [T::zero(); 3];
    let mut y_mean = T::zero();
    for (s, g) in rows {
        for (m, v) in x_mean.iter_mut().zip(s.to_array()) {
            *m += v;
        }
        y_mean += *g;
    }
    for m in &mut x_mean {
        *m /= n;
    }
    y_mean /= n;
    let x = rows
        .iter()
        .map(|(s, _)| {
            let a = s.to_array();
            [a[0] - x_mean[0], a[1] - x_mean[1], a[2] - x_mean[2]]
        })
        .collect();
    let y = rows.iter().map(|(_, g)| *g - y_mean).collect();
    Centered { x, y, x_mean, y_mean }
}

/// Solves a 3×3 system by Gaussian elimination with partial pivoting.
fn solve3<T: Real>(mut a: [[T; 3]; 3], mut b: [T; 3]) -> Result<[T; 3], RegressionError> {
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(T::zero(), |m, v| m.max(v.abs()));
    let eps = scale * T::epsilon() * lit::<T>(64.0);
    if scale == T::zero() {
        return Err(RegressionError::SingularDesign);
    }
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).expect("finite design"))
            .expect("non-empty range");
        if a[pivot][col].abs() <= eps {
            return Err(RegressionError::SingularDesign);
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                let v = a[col][k];
                a[row][k] -= f * v;
            }
            let v = b[col];
            b[row] -= f * v;
        }
    }
    let mut x = [T::zero(); 3];
    for row in (0..3).rev() {
        let mut acc = b[row];
        for k in row + 1..3 {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

fn normal_equations<T: Real>(c: &Centered<T>, lambda: T) -> Result<[T; 3], RegressionError> {
    let mut xtx = [[T::zero(); 3]; 3];
    let mut xty = [T::zero(); 3];
    for (row, &y) in c.x.iter().zip(&c.y) {
        for i in 0..3 {
            xty[i] += row[i] * y;
            for j in 0..3 {
                xtx[i][j] += row[i] * row[j];
            }
        }
    }
    for (i, r) in xtx.iter_mut().enumerate() {
        r[i] += lambda;
    }
    solve3(xtx, xty)
}

fn soft_threshold<T: Real>(z: T, gamma: T) -> T {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        T::zero()
    }
}

fn coordinate_descent<T: Real>(c: &Centered<T>, lambda: T) -> ([T; 3], usize, bool) {
    let n: T = from_usize(c.y.len());
    let mut beta = [T::zero(); 3];
    let col_sq: Vec<T> = (0..3).map(|j| c.x.iter().map(|r| r[j] * r[j]).sum()).collect();
    let mut resid = c.y.clone();
    let tol: T = lit(LASSO_TOLERANCE);
    for sweep in 1..=LASSO_MAX_SWEEPS {
        let mut max_change = T::zero();
        for j in 0..3 {
            if col_sq[j] == T::zero() {
                continue;
            }
            let rho: T = c
                .x
                .iter()
                .zip(&resid)
                .map(|(r, &e)| r[j] * (e + r[j] * beta[j]))
                .sum();
            let new = soft_threshold(rho, n * lambda) / col_sq[j];
            let delta = new - beta[j];
            if delta != T::zero() {
                for (r, e) in c.x.iter().zip(resid.iter_mut()) {
                    *e -= r[j] * delta;
                }
                beta[j] = new;
            }
            max_change = max_change.max(delta.abs());
        }
        if max_change <= tol {
            return (beta, sweep, true);
        }
    }
    (beta, LASSO_MAX_SWEEPS, false)
}

pub fn fit_regression<T: Real>(
    rows: &[(Dims<T>, T)],
    method: RegressionMethod<T>,
) -> Result<RegressionFit<T>, RegressionError> {
    if rows.len() < MIN_ROWS {
        return Err(RegressionError::TooFewRows {
            need: MIN_ROWS,
            got: rows.len(),
        });
    }
    if let Some((_, g)) = rows.iter().find(|(_, g)| !(*g >= T::zero() && *g <= T::one())) {
        return Err(RegressionError::GoldOutOfRange(g.to_f64().unwrap_or(f64::NAN)));
    }
    let lambda = method.lambda();
    if !(lambda.is_finite() && lambda >= T::zero()) {
        return Err(RegressionError::InvalidLambda(lambda.to_f64().unwrap_or(f64::NAN)));
    }
    let c = center(rows);
    let (beta, sweeps, converged) = match method {
        RegressionMethod::Ols => (normal_equations(&c, T::zero())?, 0, true),
        RegressionMethod::Ridge { lambda } => (normal_equations(&c, lambda)?, 0, true),
        RegressionMethod::Lasso { lambda } => coordinate_descent(&c, lambda),
    };
    if !converged {
        log::warn!("lasso stopped after {sweeps} sweeps without reaching tolerance");
    }
    let intercept = c.y_mean - (0..3).map(|j| beta[j] * c.x_mean[j]).sum::<T>();
    let mut fit = RegressionFit {
        method,
        coefficients: Dims::from_array(beta),
        intercept,
        diagnostics: FitDiagnostics {
            n: rows.len(),
            train_mse: T::zero(),
            sweeps,
            converged,
        },
    };
    let n: T = from_usize(rows.len());
    fit.diagnostics.train_mse = rows
        .iter()
        .map(|(s, g)| {
            let r = fit.predict(s) - *g;
            r * r
        })
        .sum::<T>()
        / n;
    Ok(fit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult<T = f64> {
    pub fold: usize,
    pub train_n: usize,
    pub test_n: usize,
    pub fit: RegressionFit<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_metrics: Option<MetricSet<T>>,
    /// Why `test_metrics` is missing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation<T = f64> {
    pub method: RegressionMethod<T>,
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<FoldResult<T>>,
    /// Mean over the folds that produced metrics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_test_metrics: Option<MetricSet<T>>,
    /// Fit on every row; the one to deploy.
    pub full_fit: RegressionFit<T>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Fold assignment: rows shuffled with `seed`, then dealt round-robin.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        fold[row] = pos % k;
    }
    fold
}

/// Fits on k−1 folds and scores the held-out fold, for each fold.
///
/// With `k = 1` the single fold is both train and test set.
pub fn cross_validate<T: Real>(
    rows: &[(Dims<T>, T)],
    method: RegressionMethod<T>,
    k: usize,
    seed: u64,
) -> Result<CrossValidation<T>, RegressionError> {
    if k == 0 || k > rows.len() {
        return Err(RegressionError::InvalidFolds { k, rows: rows.len() });
    }
    let full_fit = fit_regression(rows, method)?;
    let mut warnings = Vec::new();
    if k == 1 {
        warnings.push("k = 1: test metrics are computed on the training data".to_string());
    }
    let assignment = fold_assignment(rows.len(), k, seed);
    let mut folds = Vec::with_capacity(k);
    for fold in 0..k {
        let (train, test): (Vec<_>, Vec<_>) = if k == 1 {
            (rows.to_vec(), rows.to_vec())
        } else {
            let mut train = Vec::new();
            let mut test = Vec::new();
            for (row, f) in rows.iter().zip(&assignment) {
                if *f == fold {
                    test.push(row.clone());
                } else {
                    train.push(row.clone());
                }
            }
            (train, test)
        };
        let fit = fit_regression(&train, method)?;
        let pred: Vec<T> = test.iter().map(|(s, _)| fit.predict(s)).collect();
        let gold: Vec<T> = test.iter().map(|(_, g)| *g).collect();
        let (test_metrics, note) = match MetricSet::compute(&pred, &gold) {
            Ok(m) => (Some(m), None),
            Err(e) => (None, Some(e.to_string())),
        };
        folds.push(FoldResult {
            fold,
            train_n: train.len(),
            test_n: test.len(),
            fit,
            test_metrics,
            note,
        });
    }
    let scored: Vec<MetricSet<T>> = folds.iter().filter_map(|f| f.test_metrics).collect();
    if scored.len() < folds.len() {
        warnings.push(format!("{} of {k} folds produced no test metrics", folds.len() - scored.len()));
    }
    Ok(CrossValidation {
        method,
        k,
        seed,
        folds,
        mean_test_metrics: MetricSet::mean_of(&scored),
        full_fit,
        warnings,
    })
}
