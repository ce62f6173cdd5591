//! Label-inference attacks and their evaluation metric.
//!
//! Three attacker families score a submission by how much it betrays the
//! user's sensitive binary label: a least-squares hypothesis test, a
//! logistic classifier, and a multinomial naive Bayes classifier. Scores
//! are compared via ranking AUC, so only their order matters.

mod bayes;
mod logistic;

pub use bayes::{nb_score, nb_train, NbConfig, NbModel};
pub use logistic::{logistic_score, logistic_train, LogisticConfig, LogisticModel};

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::dataset::{ItemId, Label};
use crate::error::{Error, Result};
use crate::factorization::ExtendedItemProfile;

/// How the least-squares attacker interprets the submitted values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LseMode {
    /// Values are taken as raw ratings; hypothesis c explains value w_j as
    /// <x, v_j> + c * l_j + noise.
    Plain,
    /// Values are taken as midpoint-shifted; hypothesis c first re-adds
    /// c * l_j to reconstruct a rating, then removes it again for the fit.
    /// The shift cancels, so both hypotheses see identical data.
    ReAdd,
}

impl std::str::FromStr for LseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<LseMode> {
        match s {
            "plain" => Ok(LseMode::Plain),
            "readd" => Ok(LseMode::ReAdd),
            other => Err(Error::InvalidArgument(format!(
                "unknown LSE mode {other:?}; expected plain or readd"
            ))),
        }
    }
}

/// Least-squares label attack.
///
/// Fits the latent profile by ridge regression separately under the label
/// hypotheses +1 and -1 and returns (predicted label, score) where score =
/// RSS(-1) - RSS(+1): positive means the +1 hypothesis explains the
/// submission better. Ties (score exactly 0, e.g. all biases zero) classify
/// as Plus. `ridge` must be positive so the fit is defined for any item set.
pub fn lse_attack(
    values: &[(ItemId, f64)],
    catalog: &[ExtendedItemProfile],
    ridge: f64,
    mode: LseMode,
) -> Result<(Label, f64)> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("no observations to attack".to_string()));
    }
    if !(ridge > 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidArgument(format!("ridge must be positive, got {ridge}")));
    }
    let observations: Vec<(&ExtendedItemProfile, f64)> = values
        .iter()
        .map(|&(id, w)| {
            if !w.is_finite() {
                return Err(Error::InvalidData(format!("non-finite value for item {id}")));
            }
            catalog
                .iter()
                .find(|p| p.item_id == id)
                .map(|p| (p, w))
                .ok_or_else(|| Error::InvalidData(format!("item {id} is not in the catalog")))
        })
        .collect::<Result<_>>()?;
    let d = observations[0].0.latent.len();

    let mut a = DMatrix::<f64>::identity(d, d) * ridge;
    for (profile, _) in &observations {
        if profile.latent.len() != d {
            return Err(Error::InvalidData("catalog latents have mixed dimensions".to_string()));
        }
        let v = DVector::from_column_slice(&profile.latent);
        a.ger(1.0, &v, &v, 1.0);
    }
    let chol = Cholesky::new(a)
        .ok_or_else(|| Error::SingularSystem("attack normal matrix is not positive definite".to_string()))?;

    let mut rss = [0.0f64; 2];
    for (slot, c) in [(0usize, 1.0f64), (1usize, -1.0f64)] {
        let targets: Vec<f64> = observations
            .iter()
            .map(|(p, w)| match mode {
                LseMode::Plain => w - c * p.bias,
                LseMode::ReAdd => {
                    let reconstructed = w + c * p.bias;
                    reconstructed - c * p.bias
                }
            })
            .collect();
        let mut b = DVector::<f64>::zeros(d);
        for ((p, _), &y) in observations.iter().zip(&targets) {
            let v = DVector::from_column_slice(&p.latent);
            b.axpy(y, &v, 1.0);
        }
        let x_hat = chol.solve(&b);
        rss[slot] = observations
            .iter()
            .zip(&targets)
            .map(|((p, _), &y)| {
                let pred: f64 = p.latent.iter().zip(x_hat.iter()).map(|(v, x)| v * x).sum();
                (y - pred) * (y - pred)
            })
            .sum();
    }
    let score = rss[1] - rss[0];
    let label = if score >= 0.0 { Label::Plus } else { Label::Minus };
    Ok((label, score))
}

/// Area under the ROC curve of `scores` against true labels.
///
/// Rank statistic with average ranks on ties: the probability that a
/// uniformly random Plus user outscores a uniformly random Minus user,
/// ties counting one half. Errors unless both classes are present.
pub fn auc(scored: &[(Label, f64)]) -> Result<f64> {
    let n_plus = scored.iter().filter(|(l, _)| *l == Label::Plus).count();
    let n_minus = scored.len() - n_plus;
    if n_plus == 0 || n_minus == 0 {
        return Err(Error::InvalidArgument(
            "AUC needs at least one score from each class".to_string(),
        ));
    }
    for (_, s) in scored {
        if s.is_nan() {
            return Err(Error::InvalidData("NaN score".to_string()));
        }
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&i, &j| scored[i].1.total_cmp(&scored[j].1));

    // Average rank over each tie group, 1-based.
    let mut rank_sum_plus = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scored[order[j]].1 == scored[order[i]].1 {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if scored[idx].0 == Label::Plus {
                rank_sum_plus += avg_rank;
            }
        }
        i = j;
    }
    let n_plus_f = n_plus as f64;
    Ok((rank_sum_plus - n_plus_f * (n_plus_f + 1.0) / 2.0) / (n_plus_f * n_minus as f64))
}
