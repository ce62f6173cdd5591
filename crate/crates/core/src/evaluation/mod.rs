//! Cross-validated privacy-risk / accuracy evaluation across schemes.
//!
//! The harness reproduces the experimental loop: per fold, a model is
//! trained on the remaining folds; each test user's ratings are split into
//! an observed part (obfuscated and attacked) and a holdout part (scored by
//! RMSE of the predictions from the estimated profile). AUC measures how
//! well each attacker separates the classes from the obfuscated output.

mod schemes;

pub use schemes::{
    apply_scheme, Attacker, RoundingRange, Scheme, SchemeKind, XhatPolicy,
};

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{split_folds, split_user_ratings, ItemId, Label, RatingsDataset, UserId};
use crate::error::{Error, Result};
use crate::factorization::{compute_biases, train_mf, AnalystModel, ExtendedItemProfile, MfHyperparams};
use crate::inference::{
    logistic_score, logistic_train, lse_attack, nb_score, nb_train, LogisticConfig, LogisticModel,
    LseMode, NbConfig, NbModel,
};
use crate::protocol::estimate_profile;
use crate::seed;

/// Full experiment configuration; JSON with every field defaulted.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ExperimentConfig {
    pub folds: usize,
    /// Fraction of each test user's ratings that is observed (obfuscated);
    /// the rest is the prediction holdout.
    pub split_fraction: f64,
    pub schemes: Vec<Scheme>,
    pub attackers: Vec<Attacker>,
    pub mf: MfHyperparams,
    /// Every random stream of the run derives from this seed.
    pub master_seed: u64,
    /// Ridge used by both the profile estimator and the LSE attack.
    pub ridge: f64,
    pub xhat_policy: XhatPolicy,
    pub logistic: LogisticConfig,
    pub nb: NbConfig,
    /// Drop users with fewer ratings before folding (0 keeps everyone).
    pub min_ratings: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            folds: 10,
            split_fraction: 0.7,
            schemes: vec![Scheme::plain(SchemeKind::No)],
            attackers: Attacker::ALL.to_vec(),
            mf: MfHyperparams::default(),
            master_seed: 0,
            ridge: 1e-6,
            xhat_policy: XhatPolicy::Auto,
            logistic: LogisticConfig::default(),
            nb: NbConfig::default(),
            min_ratings: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 folds, got {}",
                self.folds
            )));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "split fraction {} must be in (0, 1)",
                self.split_fraction
            )));
        }
        if self.schemes.is_empty() {
            return Err(Error::InvalidArgument("no schemes configured".to_string()));
        }
        for scheme in &self.schemes {
            scheme.validate()?;
        }
        if self.attackers.is_empty() {
            return Err(Error::InvalidArgument("no attackers configured".to_string()));
        }
        if !(self.ridge > 0.0 && self.ridge.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "ridge must be positive, got {}",
                self.ridge
            )));
        }
        self.mf.validate()
    }
}

/// AUC of one attacker.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct AttackerAuc {
    pub attacker: Attacker,
    pub auc: f64,
}

/// One fold's results for one scheme.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FoldOutcome {
    pub fold: usize,
    pub aucs: Vec<AttackerAuc>,
    pub rmse: f64,
    pub n_predictions: usize,
    /// Test users that produced nonempty feedback under this scheme.
    pub n_users_scored: usize,
}

/// Scheme-level aggregates over all folds.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Aggregate {
    /// Unweighted mean of the per-fold AUCs.
    pub mean_auc: Vec<AttackerAuc>,
    /// AUC of all folds' scores ranked together (every user appears in
    /// exactly one test fold, so this is the whole-population statistic).
    pub pooled_auc: Vec<AttackerAuc>,
    /// Unweighted mean of the per-fold RMSEs.
    pub mean_rmse: f64,
    /// RMSE over all predictions of all folds.
    pub pooled_rmse: f64,
    pub n_predictions: usize,
}

/// Distribution summary of per-user exclusion ratios |S0 \ S_R| / |S0|.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DropRatioStats {
    pub n_users: usize,
    pub mean: f64,
    pub quantiles: Vec<Quantile>,
    /// Fraction of users whose feedback kept every rated item.
    pub frac_all_included: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct Quantile {
    pub q: f64,
    pub value: f64,
}

/// Everything measured for one scheme.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SchemeOutcome {
    pub scheme: Scheme,
    /// Row label used in CSV output.
    pub label: String,
    pub per_fold: Vec<FoldOutcome>,
    pub aggregate: Aggregate,
    /// Present only for sub-sampling schemes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drop_ratios: Option<DropRatioStats>,
}

/// The experiment report.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Report {
    pub folds: usize,
    /// Labeled users that entered the folds.
    pub n_users: usize,
    pub schemes: Vec<SchemeOutcome>,
}

impl Report {
    pub fn scheme(&self, label: &str) -> Option<&SchemeOutcome> {
        self.schemes.iter().find(|s| s.label == label)
    }

    pub fn pooled_auc(&self, scheme_label: &str, attacker: Attacker) -> Option<f64> {
        self.scheme(scheme_label)?
            .aggregate
            .pooled_auc
            .iter()
            .find(|a| a.attacker == attacker)
            .map(|a| a.auc)
    }

    pub fn pooled_rmse(&self, scheme_label: &str) -> Option<f64> {
        self.scheme(scheme_label).map(|s| s.aggregate.pooled_rmse)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Report> {
        Ok(serde_json::from_str(json)?)
    }

    /// Flat per-cell rows: fold, scheme, attacker, auc, rmse.
    pub fn write_csv<W: std::io::Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["fold", "scheme", "attacker", "auc", "rmse"])?;
        for outcome in &self.schemes {
            for fold in &outcome.per_fold {
                for cell in &fold.aucs {
                    w.write_record(&[
                        fold.fold.to_string(),
                        outcome.label.clone(),
                        cell.attacker.to_string(),
                        cell.auc.to_string(),
                        fold.rmse.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// One point of the privacy/accuracy tradeoff curve.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct CurvePoint {
    pub alpha: f64,
    pub auc_lse: f64,
    pub rmse: f64,
}

/// Writes curve points as CSV: alpha, auc_lse, rmse.
pub fn write_curve_csv<W: std::io::Write>(points: &[CurvePoint], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["alpha", "auc_lse", "rmse"])?;
    for p in points {
        w.write_record(&[p.alpha.to_string(), p.auc_lse.to_string(), p.rmse.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Root mean square error between predictions and actual values.
pub fn rmse(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} actual values",
            predicted.len(),
            actual.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::InvalidArgument("RMSE of an empty vector".to_string()));
    }
    let sum: f64 = predicted.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum();
    Ok((sum / predicted.len() as f64).sqrt())
}

/// Raw per-fold accumulators before aggregation.
struct SchemeRaw {
    /// scores[attacker_index] = (true label, attack score) per scored user.
    scores: Vec<Vec<(Label, f64)>>,
    sq_sum: f64,
    n_predictions: usize,
    n_users_scored: usize,
    drop_ratios: Vec<f64>,
}

struct FoldRaw {
    fold: usize,
    per_scheme: Vec<SchemeRaw>,
}

fn dense_vector(
    pairs: impl Iterator<Item = (ItemId, f64)>,
    index: &BTreeMap<ItemId, usize>,
    n_items: usize,
) -> Vec<f64> {
    let mut v = vec![0.0; n_items];
    for (item, value) in pairs {
        if let Some(&idx) = index.get(&item) {
            v[idx] = value;
        }
    }
    v
}

/// Clamp-rounds a dense vector onto the naive Bayes level grid; 0 doubles
/// as the unrated marker.
fn to_levels(v: &[f64], max_level: u32) -> Vec<f64> {
    v.iter().map(|&x| x.round().clamp(0.0, max_level as f64)).collect()
}

/// Whether the effective scheme midpoint-shifts anything. At alpha = 0 no
/// rating is ever transformed, so every kind degenerates to NO and the
/// downstream pipeline must treat the values as raw ratings; this keeps the
/// mixing curve's alpha = 0 point identical to an NO run.
fn effectively_shifts(scheme: &Scheme) -> bool {
    scheme.kind.midpoint_shifts() && scheme.alpha > 0.0
}

fn resolved_policy(policy: XhatPolicy, scheme: &Scheme) -> XhatPolicy {
    match policy {
        XhatPolicy::Auto => {
            if effectively_shifts(scheme) {
                XhatPolicy::Midpoint
            } else {
                XhatPolicy::InferredLse
            }
        }
        fixed => fixed,
    }
}

/// The LSE attacker re-adds hypothesized shifts on midpoint schemes (the
/// best-informed reading of shifted values) and reads everything else as
/// raw ratings.
fn lse_mode_for(scheme: &Scheme) -> LseMode {
    if effectively_shifts(scheme) {
        LseMode::ReAdd
    } else {
        LseMode::Plain
    }
}

fn summarize_ratios(ratios: &[f64]) -> Option<DropRatioStats> {
    if ratios.is_empty() {
        return None;
    }
    let mut sorted = ratios.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // Nearest-rank quantiles.
    let quantiles = [0.1, 0.25, 0.5, 0.75, 0.9]
        .iter()
        .map(|&q| {
            let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
            Quantile { q, value: sorted[rank - 1] }
        })
        .collect();
    Some(DropRatioStats {
        n_users: n,
        mean: sorted.iter().sum::<f64>() / n as f64,
        quantiles,
        frac_all_included: sorted.iter().filter(|&&r| r == 0.0).count() as f64 / n as f64,
    })
}

/// Per-fold model fit plus test-user loop.
fn compute_fold(
    ds: &RatingsDataset,
    folds: &[Vec<UserId>],
    fold: usize,
    config: &ExperimentConfig,
) -> Result<FoldRaw> {
    let test_ids = &folds[fold];
    let test_set: BTreeSet<UserId> = test_ids.iter().copied().collect();
    let train_ids: BTreeSet<UserId> =
        ds.labeled_users().into_iter().filter(|u| !test_set.contains(u)).collect();
    let train_ds = ds.restrict_users(&train_ids);

    let biases = compute_biases(&train_ds)?;
    let mf = MfHyperparams {
        seed: seed::derive(config.master_seed, &[seed::stream::TRAIN, fold as u64]),
        ..config.mf.clone()
    };
    let model = train_mf(&train_ds, &biases.biases, &mf)?;
    let catalog: Vec<ExtendedItemProfile> =
        model.items.iter().map(|item| item.profile()).collect();
    let index = model.item_index();
    let n_items = model.items.len();

    let need_lr = config.attackers.contains(&Attacker::Logistic);
    let need_nb = config.attackers.contains(&Attacker::NaiveBayes);
    let (lr_model, nb_model): (Option<LogisticModel>, Option<NbModel>) = if need_lr || need_nb {
        let mut vectors = Vec::new();
        let mut labels = Vec::new();
        for user in train_ds.users() {
            if let Some(label) = user.label {
                vectors.push(dense_vector(
                    user.ratings.iter().map(|(&i, &r)| (i, r)),
                    &index,
                    n_items,
                ));
                labels.push(label);
            }
        }
        let lr = if need_lr {
            let cfg = LogisticConfig {
                seed: seed::derive(config.master_seed, &[seed::stream::ATTACK, fold as u64]),
                ..config.logistic
            };
            Some(logistic_train(&vectors, &labels, &cfg)?)
        } else {
            None
        };
        let nb = if need_nb {
            let leveled: Vec<Vec<f64>> =
                vectors.iter().map(|v| to_levels(v, config.nb.max_level)).collect();
            Some(nb_train(&leveled, &labels, &config.nb)?)
        } else {
            None
        };
        (lr, nb)
    } else {
        (None, None)
    };

    let mut per_scheme: Vec<SchemeRaw> = config
        .schemes
        .iter()
        .map(|_| SchemeRaw {
            scores: vec![Vec::new(); config.attackers.len()],
            sq_sum: 0.0,
            n_predictions: 0,
            n_users_scored: 0,
            drop_ratios: Vec::new(),
        })
        .collect();

    for &user_id in test_ids {
        let record = ds.user(user_id).expect("fold ids come from the dataset");
        let label = record.label.expect("folds contain labeled users only");
        // The trained model is the analyst's whole world: ratings of items
        // outside it can be neither obfuscated nor predicted.
        let in_model: BTreeMap<ItemId, f64> = record
            .ratings
            .iter()
            .filter(|(item, _)| index.contains_key(item))
            .map(|(&i, &r)| (i, r))
            .collect();
        if in_model.len() < 2 {
            continue;
        }
        let (s0, holdout) = split_user_ratings(
            &in_model,
            config.split_fraction,
            seed::derive(config.master_seed, &[seed::stream::SPLIT, fold as u64, user_id]),
        )?;

        for (s_idx, scheme) in config.schemes.iter().enumerate() {
            let mut rng = seed::rng(
                config.master_seed,
                &[seed::stream::SCHEME, fold as u64, s_idx as u64, user_id],
            );
            let feedback = apply_scheme(scheme, &s0, label, &model, &mut rng)?;
            let raw = &mut per_scheme[s_idx];
            if scheme.kind.subsamples() {
                raw.drop_ratios
                    .push((s0.len() - feedback.len()) as f64 / s0.len() as f64);
            }
            if feedback.is_empty() {
                continue;
            }
            let pairs: Vec<(ItemId, f64)> = feedback
                .revealed
                .iter()
                .copied()
                .zip(feedback.values.iter().copied())
                .collect();

            for (a_idx, attacker) in config.attackers.iter().enumerate() {
                let score = match attacker {
                    Attacker::Lse => {
                        lse_attack(&pairs, &catalog, config.ridge, lse_mode_for(scheme))?.1
                    }
                    Attacker::Logistic => {
                        let v = dense_vector(pairs.iter().copied(), &index, n_items);
                        logistic_score(lr_model.as_ref().expect("trained above"), &v)?
                    }
                    Attacker::NaiveBayes => {
                        let v = dense_vector(pairs.iter().copied(), &index, n_items);
                        nb_score(
                            nb_model.as_ref().expect("trained above"),
                            &to_levels(&v, config.nb.max_level),
                        )?
                    }
                };
                raw.scores[a_idx].push((label, score));
            }

            let (x_hat, x_hat0) = match resolved_policy(config.xhat_policy, scheme) {
                XhatPolicy::Midpoint => {
                    let est =
                        estimate_profile(&catalog, &feedback, config.ridge, model.noise_sigma_hat)?;
                    (est.x_hat, 0.0)
                }
                XhatPolicy::InferredLse => {
                    let (inferred, _) =
                        lse_attack(&pairs, &catalog, config.ridge, LseMode::Plain)?;
                    let x0 = inferred.value();
                    let shifted: Vec<f64> = pairs
                        .iter()
                        .map(|&(item, w)| w - x0 * model.item(item).expect("in catalog").bias)
                        .collect();
                    let fb = crate::protocol::ObfuscatedFeedback::new(
                        feedback.revealed.clone(),
                        shifted,
                    )?;
                    let est = estimate_profile(&catalog, &fb, config.ridge, model.noise_sigma_hat)?;
                    (est.x_hat, x0)
                }
                XhatPolicy::Auto => unreachable!("resolved above"),
            };
            for (&item, &actual) in &holdout {
                let m = model.item(item).expect("holdout is model-covered");
                let pred: f64 =
                    x_hat.iter().zip(&m.latent).map(|(x, v)| x * v).sum::<f64>() + x_hat0 * m.bias;
                raw.sq_sum += (pred - actual) * (pred - actual);
                raw.n_predictions += 1;
            }
            raw.n_users_scored += 1;
        }
    }
    Ok(FoldRaw { fold, per_scheme })
}

/// Runs the full cross-validated experiment.
///
/// Deterministic given the config: folds, MF training, attacker training,
/// per-user splits and per-(fold, scheme, user) obfuscation draws all derive
/// from `master_seed`. Folds run in parallel; aggregation order is fixed.
pub fn run_experiment(dataset: &RatingsDataset, config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let filtered;
    let ds: &RatingsDataset = if config.min_ratings > 0 {
        filtered = dataset.filter_min_ratings(config.min_ratings);
        &filtered
    } else {
        dataset
    };
    let labeled: BTreeSet<UserId> = ds.labeled_users().into_iter().collect();
    if labeled.is_empty() {
        return Err(Error::InvalidData("dataset has no labeled users".to_string()));
    }
    let ds = ds.restrict_users(&labeled);
    let folds = split_folds(&ds, config.folds, config.master_seed)?;

    let raws: Vec<FoldRaw> = (0..folds.len())
        .into_par_iter()
        .map(|f| compute_fold(&ds, &folds, f, config))
        .collect::<Result<Vec<_>>>()?;

    let mut outcomes = Vec::with_capacity(config.schemes.len());
    for (s_idx, scheme) in config.schemes.iter().enumerate() {
        let mut per_fold = Vec::with_capacity(folds.len());
        let mut pooled_scores: Vec<Vec<(Label, f64)>> =
            vec![Vec::new(); config.attackers.len()];
        let mut sq_sum = 0.0;
        let mut n_predictions = 0;
        let mut all_ratios = Vec::new();

        for raw in &raws {
            let sr = &raw.per_scheme[s_idx];
            let mut aucs = Vec::with_capacity(config.attackers.len());
            for (a_idx, attacker) in config.attackers.iter().enumerate() {
                let auc = crate::inference::auc(&sr.scores[a_idx]).map_err(|e| {
                    Error::InvalidData(format!(
                        "fold {}, scheme {}, attacker {}: {e}",
                        raw.fold,
                        scheme.label(),
                        attacker
                    ))
                })?;
                aucs.push(AttackerAuc { attacker: *attacker, auc });
                pooled_scores[a_idx].extend_from_slice(&sr.scores[a_idx]);
            }
            if sr.n_predictions == 0 {
                return Err(Error::InvalidData(format!(
                    "fold {}, scheme {}: no predictions (all users skipped)",
                    raw.fold,
                    scheme.label()
                )));
            }
            per_fold.push(FoldOutcome {
                fold: raw.fold,
                aucs,
                rmse: (sr.sq_sum / sr.n_predictions as f64).sqrt(),
                n_predictions: sr.n_predictions,
                n_users_scored: sr.n_users_scored,
            });
            sq_sum += sr.sq_sum;
            n_predictions += sr.n_predictions;
            all_ratios.extend_from_slice(&sr.drop_ratios);
        }

        let mean_auc = config
            .attackers
            .iter()
            .enumerate()
            .map(|(a_idx, attacker)| AttackerAuc {
                attacker: *attacker,
                auc: per_fold.iter().map(|f| f.aucs[a_idx].auc).sum::<f64>()
                    / per_fold.len() as f64,
            })
            .collect();
        let pooled_auc = config
            .attackers
            .iter()
            .enumerate()
            .map(|(a_idx, attacker)| {
                Ok(AttackerAuc {
                    attacker: *attacker,
                    auc: crate::inference::auc(&pooled_scores[a_idx])?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        outcomes.push(SchemeOutcome {
            scheme: scheme.clone(),
            label: scheme.label(),
            per_fold,
            aggregate: Aggregate {
                mean_auc,
                pooled_auc,
                mean_rmse: raws
                    .iter()
                    .map(|r| {
                        let sr = &r.per_scheme[s_idx];
                        (sr.sq_sum / sr.n_predictions as f64).sqrt()
                    })
                    .sum::<f64>()
                    / raws.len() as f64,
                pooled_rmse: (sq_sum / n_predictions as f64).sqrt(),
                n_predictions,
            },
            drop_ratios: summarize_ratios(&all_ratios),
        });
    }

    Ok(Report { folds: folds.len(), n_users: labeled.len(), schemes: outcomes })
}

/// Sweeps the mixing level over `alphas` for one scheme family.
///
/// Each point is a full [`run_experiment`] restricted to the LSE attacker;
/// points are emitted in the given grid order.
pub fn tradeoff_sweep(
    dataset: &RatingsDataset,
    scheme: &Scheme,
    alphas: &[f64],
    config: &ExperimentConfig,
) -> Result<Vec<CurvePoint>> {
    if alphas.is_empty() {
        return Err(Error::InvalidArgument("empty alpha grid".to_string()));
    }
    let mut points = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidArgument(format!("alpha {alpha} outside [0, 1]")));
        }
        let mut cfg = config.clone();
        cfg.schemes = vec![scheme.clone().with_alpha(alpha)];
        cfg.attackers = vec![Attacker::Lse];
        let report = run_experiment(dataset, &cfg)?;
        let outcome = &report.schemes[0];
        points.push(CurvePoint {
            alpha,
            auc_lse: outcome.aggregate.pooled_auc[0].auc,
            rmse: outcome.aggregate.pooled_rmse,
        });
    }
    Ok(points)
}

/// Simulates MPSS sub-sampling once per labeled user and summarizes the
/// per-user exclusion ratios |S0 \ S_R| / |S0|.
pub fn drop_ratio_stats<R: Rng>(
    dataset: &RatingsDataset,
    model: &AnalystModel,
    rng: &mut R,
) -> Result<DropRatioStats> {
    use crate::protocol::{class_ratio, keep_probability};
    let mut ratios = Vec::new();
    for user in dataset.users() {
        let Some(label) = user.label else { continue };
        let mut total = 0usize;
        let mut dropped = 0usize;
        for (&item, _) in &user.ratings {
            let Some(m) = model.item(item) else { continue };
            total += 1;
            let keep = keep_probability(class_ratio(m.p_plus, m.p_minus)?, label);
            if !(keep >= 1.0 || (keep > 0.0 && rng.random_bool(keep))) {
                dropped += 1;
            }
        }
        if total > 0 {
            ratios.push(dropped as f64 / total as f64);
        }
    }
    summarize_ratios(&ratios).ok_or_else(|| {
        Error::InvalidData("no labeled users with model-covered ratings".to_string())
    })
}
