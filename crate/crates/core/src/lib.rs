//! Patent-pair similarity through a multi-aspect reasoning graph.
//!
//! A pair of patents is decomposed into technical features, application
//! domains and claim scope. Each dimension is scored by a language model,
//! a short chain of reasoning stages derives per-pair weights, and the final
//! similarity is the weighted sum of the dimension scores. The crate also
//! holds the evaluation and ablation tooling around that pipeline.
//!
//! Numeric code is generic over [`scalar::Real`] (or [`scalar::Field`] for
//! the exact agreement statistics); the aliases below fix it to `f64`.

pub mod baselines;
pub mod corpus;
pub mod dims;
pub mod engine;
pub mod evalkit;
pub mod gateway;
pub mod prompts;
pub mod scalar;

/// Arbitrary-precision rational, used for exact agreement statistics.
pub type Rational = num_rational::BigRational;

pub type Scores = dims::Dims<f64>;
pub type Weights = engine::WeightVector<f64>;
pub type Similarity = engine::SimilarityResult<f64>;
pub type Metrics = evalkit::MetricSet<f64>;
pub type Fit = baselines::RegressionFit<f64>;
