//! Privacy-preserving rating collection for matrix-factorization recommenders.
//!
//! A recommender's analyst wants per-user latent profiles, but users hold a
//! binary private feature (gender, politics, ...) that leaks through ratings.
//! This crate implements the two obfuscation protocols that make the reported
//! feedback statistically independent of that feature, plus everything needed
//! to run and evaluate them end to end:
//!
//! - [`dataset`]: rating-file parsing, cross-validation splits, and a
//!   synthetic generator with known ground truth.
//! - [`factorization`]: bias-augmented matrix factorization producing the
//!   analyst's extended item profiles and per-class rating probabilities.
//! - [`protocol`]: midpoint obfuscation, sub-sampled disclosure, the
//!   least-squares profile estimator, stochastic rounding, multi-round
//!   session accumulation, and categorical-feature binarization.
//! - [`selection`]: A-optimal solicitation-set selection (lazy greedy with a
//!   brute-force oracle).
//! - [`inference`]: attack classifiers (least-squares, logistic, naive
//!   Bayes) and the AUC privacy-risk metric.
//! - [`evaluation`]: the cross-validated privacy-risk / accuracy harness and
//!   the mixing-level tradeoff sweep.
//! - [`wire`]: a newline-delimited JSON analyst service and user agent whose
//!   message schema structurally cannot carry the private feature.
//!
//! All randomness flows from explicit seeds through [`seed`]; every public
//! operation is deterministic given its seed.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod factorization;
pub mod inference;
pub mod protocol;
pub mod seed;
pub mod selection;
pub mod wire;

pub use error::{Error, Result};
