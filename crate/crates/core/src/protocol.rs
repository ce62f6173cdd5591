//! Disclosure, obfuscation, and estimation.
//!
//! The midpoint protocol: the analyst discloses each solicited item's bias
//! v_j0, the user reports y_j = r_j - x_0 * v_j0. Because the bias term is
//! the only label-dependent part of the rating model, the shifted values are
//! distributed identically for both classes, so the feedback carries no
//! information about x_0.
//!
//! The sub-sampling variant additionally discloses rho_j = p_j^- / p_j^+ and
//! has the user keep each rated item with probability min(1, rho_j^{x_0}).
//! That equalizes not just the reported values but *which* items get
//! reported: both classes end up revealing item j with probability
//! min(p_j^+, p_j^-), the largest value any private protocol can achieve.
//!
//! The analyst recovers the user's latent profile from shifted feedback by
//! least squares, which under Gaussian noise is also the minimax estimator;
//! its expected squared error is sigma^2 * tr[(sum v_j v_j^T)^-1].

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{ItemId, Label};
use crate::error::{Error, Result};
use crate::factorization::ExtendedItemProfile;

/// Per-item public information sent by the analyst.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisclosedItem {
    pub id: ItemId,
    /// The item bias v_j0.
    pub bias: f64,
    /// rho_j = p_j^- / p_j^+; present only for the sub-sampling protocol.
    /// +infinity (serialized as the string "inf") marks p+ = 0 with p- > 0.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "ratio_serde")]
    pub ratio: Option<f64>,
}

/// What the analyst publishes for a solicited set: biases only, never
/// latent vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disclosure {
    pub items: Vec<DisclosedItem>,
}

impl Disclosure {
    /// True when every item carries a ratio (sub-sampling disclosure).
    pub fn has_ratios(&self) -> bool {
        !self.items.is_empty() && self.items.iter().all(|i| i.ratio.is_some())
    }

    fn by_id(&self) -> BTreeMap<ItemId, &DisclosedItem> {
        self.items.iter().map(|i| (i.id, i)).collect()
    }
}

/// Serializes finite ratios as numbers and +infinity as the string "inf";
/// JSON has no infinity literal.
mod ratio_serde {
    use serde::de::Error as DeError;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, ser: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) if x.is_infinite() => ser.serialize_str("inf"),
            Some(x) => ser.serialize_f64(*x),
            None => ser.serialize_none(),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Option<f64>, D::Error> {
        match Option::<Repr>::deserialize(de)? {
            None => Ok(None),
            Some(Repr::Num(x)) if x >= 0.0 => Ok(Some(x)),
            Some(Repr::Num(x)) => Err(D::Error::custom(format!("ratio {x} must be nonnegative"))),
            Some(Repr::Str(s)) if s == "inf" => Ok(Some(f64::INFINITY)),
            Some(Repr::Str(s)) => Err(D::Error::custom(format!("unknown ratio literal {s:?}"))),
        }
    }
}

/// The user's reply: which items were revealed and their shifted values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObfuscatedFeedback {
    pub revealed: Vec<ItemId>,
    pub values: Vec<f64>,
}

impl ObfuscatedFeedback {
    pub fn new(revealed: Vec<ItemId>, values: Vec<f64>) -> Result<Self> {
        let fb = ObfuscatedFeedback { revealed, values };
        fb.validate()?;
        Ok(fb)
    }

    pub fn validate(&self) -> Result<()> {
        if self.revealed.len() != self.values.len() {
            return Err(Error::InvalidData(format!(
                "feedback has {} revealed items but {} values",
                self.revealed.len(),
                self.values.len()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.revealed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.revealed.is_empty()
    }
}

/// Estimated user profile with its loss diagnostic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileEstimate {
    pub x_hat: Vec<f64>,
    /// sigma^2 * tr[(sum v v^T + ridge I)^-1], the expected squared
    /// estimation error under the fitted noise scale.
    pub expected_loss: f64,
    /// Number of feedback points used.
    pub n_points: usize,
}

/// Midpoint-protocol disclosure: exactly the biases of the solicited items.
pub fn mp_disclose(catalog: &[ExtendedItemProfile]) -> Result<Disclosure> {
    if catalog.is_empty() {
        return Err(Error::InvalidArgument("cannot disclose an empty item set".to_string()));
    }
    Ok(Disclosure {
        items: catalog
            .iter()
            .map(|p| DisclosedItem { id: p.item_id, bias: p.bias, ratio: None })
            .collect(),
    })
}

/// Midpoint obfuscation: y_j = r_j - x_0 * bias_j for every solicited item.
///
/// `ratings` aligns with `disclosure.items`; all items are revealed.
pub fn mp_obfuscate(
    ratings: &[f64],
    label: Label,
    disclosure: &Disclosure,
) -> Result<ObfuscatedFeedback> {
    if ratings.len() != disclosure.items.len() {
        return Err(Error::InvalidArgument(format!(
            "{} ratings for {} disclosed items",
            ratings.len(),
            disclosure.items.len()
        )));
    }
    let x0 = label.value();
    let revealed = disclosure.items.iter().map(|i| i.id).collect();
    let values = ratings
        .iter()
        .zip(&disclosure.items)
        .map(|(&r, item)| r - x0 * item.bias)
        .collect();
    ObfuscatedFeedback::new(revealed, values)
}

/// Sub-sampling disclosure: biases plus per-item ratios.
///
/// `probs[k]` is (p_k^+, p_k^-) for `catalog[k]`. Ratio policy for the
/// degenerate cases: p+ = 0 with p- > 0 maps to +infinity (a +1 user can
/// never have rated the item, so a -1 user must always drop it); both zero
/// maps to 1 (the item is never rated, the value is irrelevant).
pub fn mpss_disclose(
    catalog: &[ExtendedItemProfile],
    probs: &[(f64, f64)],
) -> Result<Disclosure> {
    if catalog.is_empty() {
        return Err(Error::InvalidArgument("cannot disclose an empty item set".to_string()));
    }
    if probs.len() != catalog.len() {
        return Err(Error::InvalidArgument(format!(
            "{} probability pairs for {} items",
            probs.len(),
            catalog.len()
        )));
    }
    let items = catalog
        .iter()
        .zip(probs)
        .map(|(p, &(p_plus, p_minus))| {
            let ratio = class_ratio(p_plus, p_minus).map_err(|_| {
                Error::InvalidArgument(format!(
                    "item {} probabilities ({p_plus}, {p_minus}) outside [0, 1]",
                    p.item_id
                ))
            })?;
            Ok(DisclosedItem { id: p.item_id, bias: p.bias, ratio: Some(ratio) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Disclosure { items })
}

/// Cross-class rating-probability ratio rho = p^- / p^+.
///
/// Sentinels: p^+ = 0 with p^- > 0 gives +infinity (a +1 user can never
/// have rated the item, so a -1 user must always drop it), both zero gives
/// 1 (the item is never rated, the value is irrelevant).
pub fn class_ratio(p_plus: f64, p_minus: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_plus) || !(0.0..=1.0).contains(&p_minus) {
        return Err(Error::InvalidArgument(format!(
            "probabilities ({p_plus}, {p_minus}) outside [0, 1]"
        )));
    }
    Ok(if p_plus > 0.0 {
        p_minus / p_plus
    } else if p_minus > 0.0 {
        f64::INFINITY
    } else {
        1.0
    })
}

/// Sub-sampling keep probability min(1, rho^{x0}).
///
/// rho^{+1} = rho and rho^{-1} = 1/rho; 1/0 = +inf and 1/+inf = 0 give
/// exactly the intended sentinel semantics.
pub fn keep_probability(ratio: f64, label: Label) -> f64 {
    match label {
        Label::Plus => ratio.min(1.0),
        Label::Minus => (1.0 / ratio).min(1.0),
    }
}

/// Sub-sampled midpoint obfuscation over the user's rated solicited items.
///
/// Each item of `s0` is kept independently with probability
/// min(1, rho^{x_0}), where rho^{+1} = rho and rho^{-1} = 1/rho; kept items
/// carry the midpoint-shifted value. Draws follow `s0` order, so output is
/// deterministic given the generator state.
pub fn mpss_obfuscate<R: Rng>(
    s0: &[(ItemId, f64)],
    label: Label,
    disclosure: &Disclosure,
    rng: &mut R,
) -> Result<ObfuscatedFeedback> {
    let by_id = disclosure.by_id();
    let x0 = label.value();
    let mut revealed = Vec::new();
    let mut values = Vec::new();
    for &(item, r) in s0 {
        let disclosed = by_id.get(&item).ok_or_else(|| {
            Error::InvalidArgument(format!("item {item} was not part of the disclosure"))
        })?;
        let ratio = disclosed.ratio.ok_or_else(|| {
            Error::InvalidArgument(format!("item {item} has no ratio; sub-sampling needs one"))
        })?;
        let keep = keep_probability(ratio, label);
        if keep >= 1.0 || (keep > 0.0 && rng.random_bool(keep)) {
            revealed.push(item);
            values.push(r - x0 * disclosed.bias);
        }
    }
    ObfuscatedFeedback::new(revealed, values)
}

/// Cholesky solve of (sum v v^T + ridge I) x = sum y v over (latent, value)
/// observation pairs, with the trace-of-inverse loss diagnostic from the
/// same factorization.
fn solve_least_squares(
    observations: &[(&[f64], f64)],
    ridge: f64,
    sigma: f64,
) -> Result<ProfileEstimate> {
    if observations.is_empty() {
        return Err(Error::InvalidArgument("cannot estimate from empty feedback".to_string()));
    }
    if !(ridge >= 0.0) {
        return Err(Error::InvalidArgument(format!("ridge {ridge} must be >= 0")));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("sigma {sigma} must be >= 0")));
    }
    let d = observations[0].0.len();
    if observations.iter().any(|(v, _)| v.len() != d) {
        return Err(Error::InvalidData("observations mix latent dimensions".to_string()));
    }
    let mut a = DMatrix::<f64>::zeros(d, d);
    let mut b = DVector::<f64>::zeros(d);
    for &(latent, y) in observations {
        let v = DVector::from_column_slice(latent);
        a.ger(1.0, &v, &v, 1.0);
        b.axpy(y, &v, 1.0);
    }
    for i in 0..d {
        a[(i, i)] += ridge;
    }
    let chol = Cholesky::new(a).ok_or_else(|| {
        Error::SingularSystem(
            "normal matrix is singular: revealed items do not span the latent space".to_string(),
        )
    })?;
    let x_hat = chol.solve(&b);
    let mut trace_inv = 0.0;
    for k in 0..d {
        let mut e = DVector::zeros(d);
        e[k] = 1.0;
        trace_inv += chol.solve(&e)[k];
    }
    Ok(ProfileEstimate {
        x_hat: x_hat.iter().copied().collect(),
        expected_loss: sigma * sigma * trace_inv,
        n_points: observations.len(),
    })
}

/// Least-squares profile estimate from obfuscated feedback.
///
/// Solves (sum v_j v_j^T + ridge I) x = sum y_j v_j by Cholesky
/// factorization; `expected_loss` is sigma^2 times the trace of the inverse
/// system matrix. The catalog slice must cover every revealed item. With
/// ridge = 0 a rank-deficient revealed set is an error rather than a garbage
/// estimate.
pub fn estimate_profile(
    catalog: &[ExtendedItemProfile],
    feedback: &ObfuscatedFeedback,
    ridge: f64,
    sigma: f64,
) -> Result<ProfileEstimate> {
    feedback.validate()?;
    let by_id: BTreeMap<ItemId, &ExtendedItemProfile> =
        catalog.iter().map(|p| (p.item_id, p)).collect();
    let observations = feedback
        .revealed
        .iter()
        .zip(&feedback.values)
        .map(|(&item, &y)| {
            by_id
                .get(&item)
                .map(|p| (p.latent.as_slice(), y))
                .ok_or_else(|| Error::InvalidData(format!("feedback names unknown item {item}")))
        })
        .collect::<Result<Vec<_>>>()?;
    solve_least_squares(&observations, ridge, sigma)
}

/// Expected squared estimation error sigma^2 * tr[(sum v v^T)^-1].
///
/// Deliberately computed through an explicit dense inverse (LU), not the
/// Cholesky path of [`estimate_profile`], so the two can cross-check each
/// other.
pub fn theoretical_l2_loss(catalog: &[ExtendedItemProfile], sigma: f64) -> Result<f64> {
    if catalog.is_empty() {
        return Err(Error::InvalidArgument("empty design".to_string()));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("sigma {sigma} must be >= 0")));
    }
    let d = catalog[0].dim();
    if catalog.iter().any(|p| p.dim() != d) {
        return Err(Error::InvalidData("catalog slice mixes latent dimensions".to_string()));
    }
    let mut a = DMatrix::<f64>::zeros(d, d);
    for p in catalog {
        let v = DVector::from_column_slice(&p.latent);
        a.ger(1.0, &v, &v, 1.0);
    }
    let inv = a
        .try_inverse()
        .ok_or_else(|| Error::SingularSystem("design normal matrix is singular".to_string()))?;
    Ok(sigma * sigma * inv.trace())
}

/// Expectation-preserving stochastic rounding onto the integer scale.
///
/// Values below `lo` or above `hi` clamp; an interior value r with
/// k = floor(r) rounds up to k+1 with probability r - k and down to k
/// otherwise, so E[output] = r. (Rounding *down* with probability r - k
/// would be biased; the unbiased assignment is the one implemented.)
pub fn round_ratings<R: Rng>(values: &[f64], lo: i64, hi: i64, rng: &mut R) -> Result<Vec<i64>> {
    if lo > hi {
        return Err(Error::InvalidArgument(format!("range [{lo}, {hi}] is empty")));
    }
    values
        .iter()
        .map(|&r| {
            if !r.is_finite() {
                return Err(Error::InvalidData(format!("cannot round non-finite value {r}")));
            }
            if r <= lo as f64 {
                return Ok(lo);
            }
            if r >= hi as f64 {
                return Ok(hi);
            }
            let k = r.floor();
            let frac = r - k;
            Ok(if frac > 0.0 && rng.random_bool(frac) { k as i64 + 1 } else { k as i64 })
        })
        .collect()
}

/// Binary expansion of a categorical feature: +1 at the category's
/// coordinate, -1 elsewhere. Categories are 1-based.
pub fn binarize_categorical(category: usize, k: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 categories, got {k}")));
    }
    if category == 0 || category > k {
        return Err(Error::InvalidArgument(format!("category {category} outside 1..={k}")));
    }
    Ok((1..=k).map(|i| if i == category { 1.0 } else { -1.0 }).collect())
}

/// Item model with one additive bias per category.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoricalItemModel {
    pub item_id: ItemId,
    pub latent: Vec<f64>,
    /// b_j^k: the rating offset when the user belongs to category k
    /// (1-based; index 0 holds category 1).
    pub category_biases: Vec<f64>,
}

/// The categorical model rewritten over the binarized feature.
///
/// With bias vector b_jk = b_j^k / 2 and mu_j = sum_k b_j^k / 2 folded into
/// an extra latent coordinate, `<(x, 1), extended_latent> + sum_k x_0k b_jk`
/// reproduces the categorical prediction identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinarizedItemModel {
    pub item_id: ItemId,
    /// (v_j, mu_j): original latent plus the absorbed constant.
    pub extended_latent: Vec<f64>,
    /// b_jk = b_j^k / 2, one per category.
    pub bias_vector: Vec<f64>,
}

/// Rewrites a categorical item model into binarized form.
pub fn transform_categorical_model(item: &CategoricalItemModel) -> Result<BinarizedItemModel> {
    if item.category_biases.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "item {} needs at least 2 category biases",
            item.item_id
        )));
    }
    let bias_vector: Vec<f64> = item.category_biases.iter().map(|b| b / 2.0).collect();
    let mu: f64 = bias_vector.iter().sum();
    let mut extended_latent = item.latent.clone();
    extended_latent.push(mu);
    Ok(BinarizedItemModel { item_id: item.item_id, extended_latent, bias_vector })
}

/// Prediction under the categorical form: `<x, v_j> + b_j^{category}`.
pub fn predict_categorical(
    item: &CategoricalItemModel,
    x: &[f64],
    category: usize,
) -> Result<f64> {
    if x.len() != item.latent.len() {
        return Err(Error::InvalidArgument("latent dimension mismatch".to_string()));
    }
    if category == 0 || category > item.category_biases.len() {
        return Err(Error::InvalidArgument(format!(
            "category {category} outside 1..={}",
            item.category_biases.len()
        )));
    }
    let dot: f64 = x.iter().zip(&item.latent).map(|(a, b)| a * b).sum();
    Ok(dot + item.category_biases[category - 1])
}

/// Prediction under the binarized form: `<(x, 1), v'_j> + sum_k x_0k b_jk`.
pub fn predict_binarized(item: &BinarizedItemModel, x: &[f64], x0: &[f64]) -> Result<f64> {
    if x.len() + 1 != item.extended_latent.len() {
        return Err(Error::InvalidArgument("latent dimension mismatch".to_string()));
    }
    if x0.len() != item.bias_vector.len() {
        return Err(Error::InvalidArgument("binarized feature dimension mismatch".to_string()));
    }
    let dot: f64 = x.iter().zip(&item.extended_latent).map(|(a, b)| a * b).sum::<f64>()
        + item.extended_latent[x.len()];
    let bias: f64 = x0.iter().zip(&item.bias_vector).map(|(a, b)| a * b).sum();
    Ok(dot + bias)
}

/// Midpoint obfuscation for a categorical user: subtracts the whole
/// binarized bias contribution sum_k x_0k b_jk.
pub fn categorical_obfuscate(rating: f64, x0: &[f64], bias_vector: &[f64]) -> Result<f64> {
    if x0.len() != bias_vector.len() {
        return Err(Error::InvalidArgument("binarized feature dimension mismatch".to_string()));
    }
    let shift: f64 = x0.iter().zip(bias_vector).map(|(a, b)| a * b).sum();
    Ok(rating - shift)
}

/// One solicitation round as stored in a session.
#[derive(Clone, Debug)]
struct SessionRound {
    catalog: Vec<ExtendedItemProfile>,
    feedback: ObfuscatedFeedback,
}

/// A user's state across repeated interactions.
///
/// Holds the private label and the accumulated per-round feedback. The type
/// has no serialized form: the label must never leave the user's process,
/// and the wire layer's schema makes that structural.
#[derive(Clone, Debug)]
pub struct UserSession {
    label: Label,
    rounds: Vec<SessionRound>,
}

impl UserSession {
    pub fn new(label: Label) -> Self {
        UserSession { label, rounds: Vec::new() }
    }

    /// The private feature; available to the owning process only.
    pub fn label(&self) -> Label {
        self.label
    }

    pub fn n_rounds(&self) -> usize {
        self.rounds.len()
    }

    pub fn n_points(&self) -> usize {
        self.rounds.iter().map(|r| r.feedback.len()).sum()
    }
}

/// Appends one round of feedback to the session.
///
/// The estimator over the accumulated session equals a single-shot estimate
/// over the concatenated designs, so accumulating rounds only ever adds
/// information.
pub fn accumulate_session(
    mut session: UserSession,
    catalog: &[ExtendedItemProfile],
    feedback: ObfuscatedFeedback,
) -> Result<UserSession> {
    feedback.validate()?;
    if let Some(first) = session.rounds.first().and_then(|r| r.catalog.first()) {
        if catalog.iter().any(|p| p.dim() != first.dim()) {
            return Err(Error::InvalidData(
                "round catalog dimension differs from earlier rounds".to_string(),
            ));
        }
    }
    let by_id: BTreeMap<ItemId, ()> = catalog.iter().map(|p| (p.item_id, ())).collect();
    for item in &feedback.revealed {
        if !by_id.contains_key(item) {
            return Err(Error::InvalidData(format!(
                "feedback names item {item} outside the round catalog"
            )));
        }
    }
    session.rounds.push(SessionRound { catalog: catalog.to_vec(), feedback });
    Ok(session)
}

/// Least-squares estimate over every accumulated round.
///
/// Each round's observations enter the design independently, so an item
/// re-solicited in a later round contributes one observation per round.
pub fn estimate_session(session: &UserSession, ridge: f64, sigma: f64) -> Result<ProfileEstimate> {
    let mut observations: Vec<(&[f64], f64)> = Vec::new();
    for round in &session.rounds {
        let by_id: BTreeMap<ItemId, &ExtendedItemProfile> =
            round.catalog.iter().map(|p| (p.item_id, p)).collect();
        for (&id, &y) in round.feedback.revealed.iter().zip(&round.feedback.values) {
            let profile = by_id
                .get(&id)
                .ok_or_else(|| Error::InvalidData(format!("feedback names unknown item {id}")))?;
            observations.push((profile.latent.as_slice(), y));
        }
    }
    solve_least_squares(&observations, ridge, sigma)
}
