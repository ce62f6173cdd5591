//! Multinomial naive Bayes label attack over integer rating levels.

use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};

/// Hyperparameters for [`nb_train`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct NbConfig {
    /// Additive smoothing pseudo-count; must be positive so every
    /// (item, level) cell has nonzero mass.
    pub alpha: f64,
    /// Largest rating level; levels run 0..=max_level with 0 doubling as
    /// the unrated marker.
    pub max_level: u32,
}

impl Default for NbConfig {
    fn default() -> Self {
        NbConfig { alpha: 1.0, max_level: 5 }
    }
}

/// A trained naive Bayes classifier; the score is the posterior log-odds
/// of Plus.
#[derive(Clone, Debug, PartialEq)]
pub struct NbModel {
    max_level: u32,
    log_prior_diff: f64,
    /// log theta[class][item][level], classes indexed Plus = 0, Minus = 1.
    log_theta: [Vec<Vec<f64>>; 2],
}

impl NbModel {
    pub fn n_items(&self) -> usize {
        self.log_theta[0].len()
    }

    pub fn max_level(&self) -> u32 {
        self.max_level
    }
}

/// Maps a feature to its integer level, rejecting anything that is not an
/// integer already: real-valued submissions must be rounded to the rating
/// scale before a multinomial model applies.
fn level_of(x: f64, max_level: u32) -> Result<usize> {
    if !x.is_finite() {
        return Err(Error::InvalidData("non-finite rating level".to_string()));
    }
    let r = x.round();
    if (x - r).abs() > 1e-9 {
        return Err(Error::InvalidData(format!(
            "rating {x} is not an integer level; round ratings to the scale first"
        )));
    }
    if r < 0.0 || r > max_level as f64 {
        return Err(Error::InvalidData(format!("rating level {r} outside 0..={max_level}")));
    }
    Ok(r as usize)
}

/// Trains a per-class multinomial model over (item, level) events.
///
/// Every user contributes one event per item (level 0 meaning unrated), so
/// each class holds n_c * M events over M * (max_level + 1) categories;
/// cell probabilities are (count + alpha) / (n_c * M + alpha * M * L).
pub fn nb_train(features: &[Vec<f64>], labels: &[Label], config: &NbConfig) -> Result<NbModel> {
    if !(config.alpha > 0.0 && config.alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be positive, got {}",
            config.alpha
        )));
    }
    if features.is_empty() {
        return Err(Error::InvalidArgument("no training vectors".to_string()));
    }
    if features.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} feature vectors but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let m = features[0].len();
    if m == 0 {
        return Err(Error::InvalidArgument("zero-dimensional features".to_string()));
    }
    let l = config.max_level as usize + 1;

    let mut counts = [vec![vec![0u64; l]; m], vec![vec![0u64; l]; m]];
    let mut n_class = [0u64; 2];
    for (f, label) in features.iter().zip(labels) {
        if f.len() != m {
            return Err(Error::InvalidData("feature vectors have mixed dimensions".to_string()));
        }
        let c = match label {
            Label::Plus => 0,
            Label::Minus => 1,
        };
        n_class[c] += 1;
        for (j, &x) in f.iter().enumerate() {
            counts[c][j][level_of(x, config.max_level)?] += 1;
        }
    }
    if n_class[0] == 0 || n_class[1] == 0 {
        return Err(Error::InvalidData("training labels must include both classes".to_string()));
    }

    let log_theta = [0, 1].map(|c: usize| {
        let denominator = n_class[c] as f64 * m as f64 + config.alpha * (m * l) as f64;
        counts[c]
            .iter()
            .map(|per_item| {
                per_item
                    .iter()
                    .map(|&n| ((n as f64 + config.alpha) / denominator).ln())
                    .collect()
            })
            .collect()
    });
    let n = (n_class[0] + n_class[1]) as f64;
    let log_prior_diff = (n_class[0] as f64 / n).ln() - (n_class[1] as f64 / n).ln();
    Ok(NbModel { max_level: config.max_level, log_prior_diff, log_theta })
}

/// Posterior log-odds of Plus for one feature vector.
pub fn nb_score(model: &NbModel, features: &[f64]) -> Result<f64> {
    if features.len() != model.n_items() {
        return Err(Error::InvalidArgument(format!(
            "feature dimension {} does not match model dimension {}",
            features.len(),
            model.n_items()
        )));
    }
    let mut score = model.log_prior_diff;
    for (j, &x) in features.iter().enumerate() {
        let level = level_of(x, model.max_level)?;
        score += model.log_theta[0][j][level] - model.log_theta[1][j][level];
    }
    Ok(score)
}
