//! Synthetic data with known ground truth.
//!
//! Realizes the linear rating model: item j has a latent vector v_j and a
//! bias v_j0, user i has a latent x and a binary feature x_0, and every
//! generated rating is `<x, v_j> + x_0 * v_j0 + noise`. Which items a user
//! rates is itself label-dependent: item j is rated with probability
//! p_j^{x_0}. The generator returns the dataset together with every latent
//! quantity so estimator and protocol tests can check against exact truth.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{ItemId, Label, RatingsDataset, UserId};
use crate::error::{Error, Result};
use crate::seed;

/// How per-item rating probabilities (p_j^+, p_j^-) are chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProbModel {
    /// Every user rates every item: p+ = p- = 1.
    Dense,
    /// Each probability drawn independently from U[lo, hi].
    Uniform { lo: f64, hi: f64 },
    /// Explicit per-item pairs, one per item.
    PerItem { probs: Vec<(f64, f64)> },
}

/// Generator configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_items: usize,
    /// Latent dimension.
    pub d: usize,
    /// Rating noise standard deviation (0 gives exact linear ratings).
    pub noise_sigma: f64,
    /// Item biases are drawn uniform in [-bias_scale, bias_scale].
    pub bias_scale: f64,
    #[serde(default = "ProbModel::default")]
    pub prob_model: ProbModel,
    /// Name recorded for the private feature.
    #[serde(default = "default_label_name")]
    pub label_name: String,
    /// When set, users come in consecutive pairs sharing the same latent x
    /// with opposite labels. Pairing removes latent-sampling variance from
    /// cross-class distribution comparisons, which is what privacy tests
    /// need; unpaired users get a fair-coin label instead.
    #[serde(default)]
    pub paired: bool,
}

fn default_label_name() -> String {
    "feature".to_string()
}

impl Default for ProbModel {
    fn default() -> Self {
        ProbModel::Dense
    }
}

/// Ground-truth item parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthItem {
    pub id: ItemId,
    pub bias: f64,
    pub latent: Vec<f64>,
    pub p_plus: f64,
    pub p_minus: f64,
}

/// Ground-truth user parameters. The label is stored as -1/+1; this document
/// is the test oracle, not a protocol artifact.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthUser {
    pub id: UserId,
    pub label: i8,
    pub latent: Vec<f64>,
}

/// Everything the generator drew, for oracle tests and end-to-end checks.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SyntheticGroundTruth {
    pub d: usize,
    pub noise_sigma: f64,
    pub items: Vec<SynthItem>,
    pub users: Vec<SynthUser>,
}

impl SyntheticGroundTruth {
    pub fn user(&self, id: UserId) -> Option<&SynthUser> {
        self.users.iter().find(|u| u.id == id)
    }

    pub fn item(&self, id: ItemId) -> Option<&SynthItem> {
        self.items.iter().find(|i| i.id == id)
    }

    /// Noise-free model rating for (user, item).
    pub fn clean_rating(&self, user: &SynthUser, item: &SynthItem) -> f64 {
        let dot: f64 = user.latent.iter().zip(&item.latent).map(|(a, b)| a * b).sum();
        dot + f64::from(user.label) * item.bias
    }
}

fn validate(config: &SynthConfig) -> Result<()> {
    if config.n_users == 0 || config.n_items == 0 || config.d == 0 {
        return Err(Error::InvalidArgument(
            "n_users, n_items and d must all be positive".to_string(),
        ));
    }
    if !(config.noise_sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise_sigma {} must be >= 0",
            config.noise_sigma
        )));
    }
    if !(config.bias_scale >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bias_scale {} must be >= 0",
            config.bias_scale
        )));
    }
    if config.paired && config.n_users % 2 != 0 {
        return Err(Error::InvalidArgument("paired generation needs an even n_users".to_string()));
    }
    match &config.prob_model {
        ProbModel::Dense => Ok(()),
        ProbModel::Uniform { lo, hi } => {
            if !(0.0..=1.0).contains(lo) || !(0.0..=1.0).contains(hi) || lo > hi {
                Err(Error::InvalidArgument(format!(
                    "uniform probability range [{lo}, {hi}] must satisfy 0 <= lo <= hi <= 1"
                )))
            } else {
                Ok(())
            }
        }
        ProbModel::PerItem { probs } => {
            if probs.len() != config.n_items {
                return Err(Error::InvalidArgument(format!(
                    "per-item probs has {} entries for {} items",
                    probs.len(),
                    config.n_items
                )));
            }
            if probs.iter().any(|(p, m)| !(0.0..=1.0).contains(p) || !(0.0..=1.0).contains(m)) {
                return Err(Error::InvalidArgument(
                    "per-item probabilities must lie in [0, 1]".to_string(),
                ));
            }
            Ok(())
        }
    }
}

/// Nonzero standard-normal vector; exact zero is excluded from the latent
/// space, so a zero draw (probability zero, but cheap to guard) is redrawn.
fn nonzero_normal_vec<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        if v.iter().any(|&x| x != 0.0) {
            return v;
        }
    }
}

/// Generates a synthetic dataset plus its ground truth.
///
/// Deterministic given `master_seed`: item parameters, user parameters, the
/// rated-set indicators and the rating noise all come from streams derived
/// from it.
pub fn generate_synthetic(
    config: &SynthConfig,
    master_seed: u64,
) -> Result<(RatingsDataset, SyntheticGroundTruth)> {
    validate(config)?;
    let mut item_rng = seed::rng(master_seed, &[seed::stream::SYNTH, 0]);
    let mut items = Vec::with_capacity(config.n_items);
    for idx in 0..config.n_items {
        let latent = nonzero_normal_vec(&mut item_rng, config.d);
        let bias = if config.bias_scale == 0.0 {
            0.0
        } else {
            item_rng.random_range(-config.bias_scale..=config.bias_scale)
        };
        let (p_plus, p_minus) = match &config.prob_model {
            ProbModel::Dense => (1.0, 1.0),
            ProbModel::Uniform { lo, hi } => {
                if lo == hi {
                    (*lo, *lo)
                } else {
                    (item_rng.random_range(*lo..=*hi), item_rng.random_range(*lo..=*hi))
                }
            }
            ProbModel::PerItem { probs } => probs[idx],
        };
        items.push(SynthItem { id: (idx + 1) as ItemId, bias, latent, p_plus, p_minus });
    }

    let mut user_rng = seed::rng(master_seed, &[seed::stream::SYNTH, 1]);
    let mut users = Vec::with_capacity(config.n_users);
    let mut shared_latent: Option<Vec<f64>> = None;
    for idx in 0..config.n_users {
        let (label, latent) = if config.paired {
            if idx % 2 == 0 {
                let latent = nonzero_normal_vec(&mut user_rng, config.d);
                shared_latent = Some(latent.clone());
                (Label::Plus, latent)
            } else {
                (Label::Minus, shared_latent.clone().expect("pair head generated first"))
            }
        } else {
            let label = if user_rng.random_bool(0.5) { Label::Plus } else { Label::Minus };
            (label, nonzero_normal_vec(&mut user_rng, config.d))
        };
        users.push(SynthUser { id: (idx + 1) as UserId, label: label.value() as i8, latent });
    }

    let mut dataset = RatingsDataset::new(Some(config.label_name.clone()), None);
    let truth = SyntheticGroundTruth {
        d: config.d,
        noise_sigma: config.noise_sigma,
        items,
        users,
    };
    for user in &truth.users {
        let label = Label::from_value(f64::from(user.label))?;
        dataset.set_label(user.id, Some(label));
        let mut cell_rng = seed::rng(master_seed, &[seed::stream::SYNTH, 2, user.id]);
        for item in &truth.items {
            let p = match label {
                Label::Plus => item.p_plus,
                Label::Minus => item.p_minus,
            };
            if p == 0.0 || !cell_rng.random_bool(p) {
                continue;
            }
            let noise: f64 = if config.noise_sigma == 0.0 {
                0.0
            } else {
                let z: f64 = StandardNormal.sample(&mut cell_rng);
                config.noise_sigma * z
            };
            dataset.add_rating(user.id, item.id, truth.clean_rating(user, item) + noise)?;
        }
    }
    Ok((dataset, truth))
}
