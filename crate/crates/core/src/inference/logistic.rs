//! Logistic-regression label attack.

use nalgebra::DVector;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::seed;

/// Hyperparameters for [`logistic_train`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct LogisticConfig {
    /// Ridge penalty on the weights (the intercept is unpenalized).
    pub l2: f64,
    /// Full-batch gradient steps.
    pub epochs: usize,
    /// Step size as a fraction of 1/L, L the gradient Lipschitz constant;
    /// values at or below 1 cannot diverge.
    pub learning_rate: f64,
    /// Seed for the Gaussian weight initialization.
    pub seed: u64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig { l2: 1e-3, epochs: 500, learning_rate: 1.0, seed: 0 }
    }
}

/// A trained logistic classifier; the score is the log-odds of Plus.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticModel {
    weights: Vec<f64>,
    intercept: f64,
}

impl LogisticModel {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }
}

/// Numerically stable logistic function.
fn sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

fn validate(features: &[Vec<f64>], labels: &[Label]) -> Result<usize> {
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
    let d = features[0].len();
    if d == 0 {
        return Err(Error::InvalidArgument("zero-dimensional features".to_string()));
    }
    for f in features {
        if f.len() != d {
            return Err(Error::InvalidData("feature vectors have mixed dimensions".to_string()));
        }
        if f.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidData("non-finite feature".to_string()));
        }
    }
    let n_plus = labels.iter().filter(|l| **l == Label::Plus).count();
    if n_plus == 0 || n_plus == labels.len() {
        return Err(Error::InvalidData("training labels must include both classes".to_string()));
    }
    Ok(d)
}

/// Trains a binary logistic classifier by full-batch gradient descent.
///
/// Minimizes mean log-loss plus (l2/2) * |w|^2. The step size is
/// `learning_rate / L` with L = max_i (|f_i|^2 + 1) / 4 + l2 an upper bound
/// on the gradient's Lipschitz constant, so the default configuration is a
/// guaranteed-descent method. Deterministic for a fixed seed.
pub fn logistic_train(
    features: &[Vec<f64>],
    labels: &[Label],
    config: &LogisticConfig,
) -> Result<LogisticModel> {
    let d = validate(features, labels)?;
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be positive, got {}",
            config.learning_rate
        )));
    }
    if !(config.l2 >= 0.0 && config.l2.is_finite()) {
        return Err(Error::InvalidArgument(format!("l2 must be nonnegative, got {}", config.l2)));
    }

    let xs: Vec<DVector<f64>> =
        features.iter().map(|f| DVector::from_column_slice(f)).collect();
    let targets: Vec<f64> =
        labels.iter().map(|l| if *l == Label::Plus { 1.0 } else { 0.0 }).collect();
    let n = xs.len() as f64;

    let mut rng = seed::rng(config.seed, &[seed::stream::ATTACK]);
    let init = Normal::new(0.0, 1e-3).expect("positive std dev");
    let mut w = DVector::from_fn(d, |_, _| init.sample(&mut rng));
    let mut b: f64 = init.sample(&mut rng);

    let lipschitz = xs
        .iter()
        .map(|x| (x.norm_squared() + 1.0) / 4.0)
        .fold(0.0f64, f64::max)
        + config.l2
        + 1e-12;
    let step = config.learning_rate / lipschitz;

    let mut grad = DVector::<f64>::zeros(d);
    for _ in 0..config.epochs {
        grad.fill(0.0);
        let mut grad_b = 0.0;
        for (x, &t) in xs.iter().zip(&targets) {
            let g = sigmoid(w.dot(x) + b) - t;
            grad.axpy(g, x, 1.0);
            grad_b += g;
        }
        grad.axpy(config.l2, &w, 1.0 / n);
        w.axpy(-step, &grad, 1.0);
        b -= step * grad_b / n;
    }
    Ok(LogisticModel { weights: w.iter().copied().collect(), intercept: b })
}

/// Log-odds score of a feature vector under a trained model.
pub fn logistic_score(model: &LogisticModel, features: &[f64]) -> Result<f64> {
    if features.len() != model.weights.len() {
        return Err(Error::InvalidArgument(format!(
            "feature dimension {} does not match model dimension {}",
            features.len(),
            model.weights.len()
        )));
    }
    if features.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidData("non-finite feature".to_string()));
    }
    Ok(model.weights.iter().zip(features).map(|(w, x)| w * x).sum::<f64>() + model.intercept)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Regularized mean log-loss, for descent checks.
    fn objective(model: &LogisticModel, features: &[Vec<f64>], labels: &[Label], l2: f64) -> f64 {
        let n = features.len() as f64;
        let mut loss = 0.0;
        for (f, l) in features.iter().zip(labels) {
            let m = logistic_score(model, f).unwrap();
            let t = if *l == Label::Plus { 1.0 } else { 0.0 };
            // log(1 + exp(m)) - t * m, computed stably.
            loss += if m > 0.0 { m + (-m).exp().ln_1p() } else { m.exp().ln_1p() } - t * m;
        }
        loss / n + 0.5 * l2 * model.weights().iter().map(|w| w * w).sum::<f64>()
    }

    fn separable_data() -> (Vec<Vec<f64>>, Vec<Label>) {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..20 {
            let t = i as f64 / 20.0;
            features.push(vec![1.0 + t, 0.5 * t]);
            labels.push(Label::Plus);
            features.push(vec![-1.0 - t, -0.5 * t]);
            labels.push(Label::Minus);
        }
        (features, labels)
    }

    #[test]
    fn learns_a_separable_problem() {
        let (features, labels) = separable_data();
        let model = logistic_train(&features, &labels, &LogisticConfig::default()).unwrap();
        for (f, l) in features.iter().zip(&labels) {
            let s = logistic_score(&model, f).unwrap();
            match l {
                Label::Plus => assert!(s > 0.0, "score {s} for a Plus vector"),
                Label::Minus => assert!(s < 0.0, "score {s} for a Minus vector"),
            }
        }
    }

    #[test]
    fn objective_never_increases_under_unit_rate() {
        let (features, labels) = separable_data();
        let mut prev = f64::INFINITY;
        for epochs in [0, 1, 2, 5, 10, 50] {
            let cfg = LogisticConfig { epochs, ..LogisticConfig::default() };
            let model = logistic_train(&features, &labels, &cfg).unwrap();
            let loss = objective(&model, &features, &labels, cfg.l2);
            assert!(loss <= prev + 1e-12, "loss rose to {loss} at {epochs} epochs");
            prev = loss;
        }
    }

    #[test]
    fn training_is_seed_deterministic() {
        let (features, labels) = separable_data();
        let cfg = LogisticConfig { seed: 7, ..LogisticConfig::default() };
        let a = logistic_train(&features, &labels, &cfg).unwrap();
        let b = logistic_train(&features, &labels, &cfg).unwrap();
        assert_eq!(a, b);
        let other = logistic_train(
            &features,
            &labels,
            &LogisticConfig { seed: 8, ..LogisticConfig::default() },
        )
        .unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn stronger_l2_shrinks_weights() {
        let (features, labels) = separable_data();
        let loose = logistic_train(
            &features,
            &labels,
            &LogisticConfig { l2: 1e-4, ..LogisticConfig::default() },
        )
        .unwrap();
        let tight = logistic_train(
            &features,
            &labels,
            &LogisticConfig { l2: 10.0, ..LogisticConfig::default() },
        )
        .unwrap();
        let norm = |m: &LogisticModel| m.weights().iter().map(|w| w * w).sum::<f64>().sqrt();
        assert!(norm(&tight) < 0.2 * norm(&loose));
    }

    #[test]
    fn rejects_invalid_input() {
        let (features, labels) = separable_data();
        assert!(logistic_train(&[], &[], &LogisticConfig::default()).is_err());
        let one_class = vec![Label::Plus; features.len()];
        assert!(logistic_train(&features, &one_class, &LogisticConfig::default()).is_err());
        let cfg = LogisticConfig { learning_rate: 0.0, ..LogisticConfig::default() };
        assert!(logistic_train(&features, &labels, &cfg).is_err());
        let model = logistic_train(&features, &labels, &LogisticConfig::default()).unwrap();
        assert!(logistic_score(&model, &[1.0]).is_err());
    }

    #[test]
    fn config_round_trips_through_json_with_defaults() {
        let cfg: LogisticConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, LogisticConfig::default());
        let full: LogisticConfig =
            serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(full, cfg);
    }
}
