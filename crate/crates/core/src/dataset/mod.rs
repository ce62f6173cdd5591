//! Rating datasets: container types, file formats, cross-validation splits,
//! and a synthetic generator with known ground truth.

mod parse;
mod synthetic;

pub use parse::{parse_labels, parse_ratings, write_labels, write_ratings, RatingsFormat};
pub use synthetic::{
    generate_synthetic, ProbModel, SynthConfig, SyntheticGroundTruth, SynthItem, SynthUser,
};

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed;

/// User identifier as it appears in rating files.
pub type UserId = u64;
/// Item identifier as it appears in rating files.
pub type ItemId = u64;

/// The binary private feature, encoded as -1/+1.
///
/// Deliberately not serializable: values of this type must never end up in a
/// protocol artifact or wire message. Ground-truth and label files that
/// legitimately store labels convert through [`Label::value`] explicitly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Minus,
    Plus,
}

impl Label {
    /// Numeric encoding: +1 or -1.
    pub fn value(self) -> f64 {
        match self {
            Label::Plus => 1.0,
            Label::Minus => -1.0,
        }
    }

    /// Parses the numeric encoding; anything but +-1 is rejected.
    pub fn from_value(v: f64) -> Result<Label> {
        if v == 1.0 {
            Ok(Label::Plus)
        } else if v == -1.0 {
            Ok(Label::Minus)
        } else {
            Err(Error::InvalidData(format!("label must be -1 or +1, got {v}")))
        }
    }

    /// The other class.
    pub fn opposite(self) -> Label {
        match self {
            Label::Plus => Label::Minus,
            Label::Minus => Label::Plus,
        }
    }
}

/// One user's ratings plus the optional private label.
#[derive(Clone, Debug, PartialEq)]
pub struct UserRecord {
    pub user_id: UserId,
    /// `None` means unknown; such users parse fine but are excluded from
    /// fold splitting and supervised training.
    pub label: Option<Label>,
    /// Rated items and their values; the map enforces at most one rating
    /// per (user, item) pair.
    pub ratings: BTreeMap<ItemId, f64>,
}

/// Sparse user-by-item ratings with optional per-user private labels.
#[derive(Clone, Debug, PartialEq)]
pub struct RatingsDataset {
    users: BTreeMap<UserId, UserRecord>,
    items: BTreeSet<ItemId>,
    label_name: Option<String>,
    /// Inclusive accepted rating range; `None` accepts any finite real
    /// (synthetic data is unbounded, star ratings are typically [1,5]).
    range: Option<(f64, f64)>,
}

impl RatingsDataset {
    /// Empty dataset accepting ratings in `range` (or any finite real).
    pub fn new(label_name: Option<String>, range: Option<(f64, f64)>) -> Self {
        RatingsDataset { users: BTreeMap::new(), items: BTreeSet::new(), label_name, range }
    }

    /// Adds one rating; rejects duplicates, non-finite and out-of-range values.
    pub fn add_rating(&mut self, user: UserId, item: ItemId, rating: f64) -> Result<()> {
        if !rating.is_finite() {
            return Err(Error::InvalidData(format!(
                "rating for ({user}, {item}) is not finite"
            )));
        }
        if let Some((lo, hi)) = self.range {
            if rating < lo || rating > hi {
                return Err(Error::InvalidData(format!(
                    "rating {rating} for ({user}, {item}) outside [{lo}, {hi}]"
                )));
            }
        }
        let record = self.users.entry(user).or_insert_with(|| UserRecord {
            user_id: user,
            label: None,
            ratings: BTreeMap::new(),
        });
        if record.ratings.insert(item, rating).is_some() {
            return Err(Error::InvalidData(format!("duplicate rating for ({user}, {item})")));
        }
        self.items.insert(item);
        Ok(())
    }

    /// Sets (or clears) a user's label, creating the user if absent.
    pub fn set_label(&mut self, user: UserId, label: Option<Label>) {
        self.users
            .entry(user)
            .or_insert_with(|| UserRecord { user_id: user, label: None, ratings: BTreeMap::new() })
            .label = label;
    }

    pub fn label_name(&self) -> Option<&str> {
        self.label_name.as_deref()
    }

    pub fn set_label_name(&mut self, name: Option<String>) {
        self.label_name = name;
    }

    pub fn range(&self) -> Option<(f64, f64)> {
        self.range
    }

    /// Users in ascending id order.
    pub fn users(&self) -> impl Iterator<Item = &UserRecord> {
        self.users.values()
    }

    pub fn user(&self, id: UserId) -> Option<&UserRecord> {
        self.users.get(&id)
    }

    /// Item catalog in ascending id order.
    pub fn items(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.items.iter().copied()
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_ratings(&self) -> usize {
        self.users.values().map(|u| u.ratings.len()).sum()
    }

    /// Ids of users with a known label, ascending.
    pub fn labeled_users(&self) -> Vec<UserId> {
        self.users.values().filter(|u| u.label.is_some()).map(|u| u.user_id).collect()
    }

    /// Restriction of the dataset to the given users (labels preserved).
    pub fn restrict_users(&self, keep: &BTreeSet<UserId>) -> RatingsDataset {
        let mut out = RatingsDataset::new(self.label_name.clone(), self.range);
        for (id, rec) in &self.users {
            if keep.contains(id) {
                out.users.insert(*id, rec.clone());
                out.items.extend(rec.ratings.keys().copied());
            }
        }
        out
    }

    /// Drops users rating fewer than `min_ratings` items (dataset filters
    /// such as "at least 20 ratings" are configuration, not constants).
    pub fn filter_min_ratings(&self, min_ratings: usize) -> RatingsDataset {
        let keep: BTreeSet<UserId> = self
            .users
            .values()
            .filter(|u| u.ratings.len() >= min_ratings)
            .map(|u| u.user_id)
            .collect();
        self.restrict_users(&keep)
    }
}

/// Partitions the labeled users into `k` folds of near-equal size.
///
/// Fold sizes differ by at most one; the shuffle is drawn from `seed` so the
/// partition is reproducible. Unlabeled users are excluded.
pub fn split_folds(dataset: &RatingsDataset, k: usize, seed: u64) -> Result<Vec<Vec<UserId>>> {
    let mut users = dataset.labeled_users();
    if k == 0 || k > users.len() {
        return Err(Error::InvalidArgument(format!(
            "fold count {k} must be in 1..={} (labeled users)",
            users.len()
        )));
    }
    let mut rng = seed::rng(seed, &[seed::stream::FOLDS]);
    users.shuffle(&mut rng);
    let n = users.len();
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut next = 0usize;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut fold: Vec<UserId> = users[next..next + size].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        next += size;
    }
    Ok(folds)
}

/// Splits one user's ratings into observed and holdout parts.
///
/// `|observed| = round(fraction * n)`, clamped so both sides stay nonempty;
/// the estimator needs observed ratings and accuracy scoring needs holdout.
pub fn split_user_ratings(
    ratings: &BTreeMap<ItemId, f64>,
    fraction: f64,
    seed: u64,
) -> Result<(BTreeMap<ItemId, f64>, BTreeMap<ItemId, f64>)> {
    let n = ratings.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 ratings to split, got {n}"
        )));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("fraction {fraction} must be in (0, 1)")));
    }
    let take = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut ids: Vec<ItemId> = ratings.keys().copied().collect();
    let mut rng = seed::rng(seed, &[seed::stream::SPLIT]);
    ids.shuffle(&mut rng);
    let observed_ids: BTreeSet<ItemId> = ids[..take].iter().copied().collect();
    let mut observed = BTreeMap::new();
    let mut holdout = BTreeMap::new();
    for (&item, &r) in ratings {
        if observed_ids.contains(&item) {
            observed.insert(item, r);
        } else {
            holdout.insert(item, r);
        }
    }
    Ok((observed, holdout))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n_users: u64) -> RatingsDataset {
        let mut ds = RatingsDataset::new(Some("feature".into()), None);
        for u in 0..n_users {
            ds.add_rating(u, 1, 3.0).unwrap();
            ds.add_rating(u, 2, 4.0).unwrap();
            ds.set_label(u, Some(if u % 2 == 0 { Label::Plus } else { Label::Minus }));
        }
        ds
    }

    #[test]
    fn duplicate_pair_rejected() {
        let mut ds = RatingsDataset::new(None, None);
        ds.add_rating(1, 10, 4.0).unwrap();
        assert!(ds.add_rating(1, 10, 4.0).is_err());
    }

    #[test]
    fn range_enforced() {
        let mut ds = RatingsDataset::new(None, Some((1.0, 5.0)));
        assert!(ds.add_rating(1, 10, 0.5).is_err());
        assert!(ds.add_rating(1, 10, 5.0).is_ok());
    }

    #[test]
    fn folds_are_balanced_partition() {
        let ds = toy(10);
        let folds = split_folds(&ds, 10, 7).unwrap();
        assert_eq!(folds.len(), 10);
        assert!(folds.iter().all(|f| f.len() == 1));

        let folds = split_folds(&ds, 3, 7).unwrap();
        let mut sizes: Vec<usize> = folds.iter().map(|f| f.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![3, 3, 4]);
        let mut all: Vec<UserId> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn folds_deterministic_and_seed_sensitive() {
        let ds = toy(20);
        assert_eq!(split_folds(&ds, 4, 7).unwrap(), split_folds(&ds, 4, 7).unwrap());
        assert_ne!(split_folds(&ds, 4, 7).unwrap(), split_folds(&ds, 4, 8).unwrap());
    }

    #[test]
    fn folds_exclude_unlabeled() {
        let mut ds = toy(10);
        ds.set_label(3, None);
        let folds = split_folds(&ds, 3, 7).unwrap();
        let all: Vec<UserId> = folds.concat();
        assert_eq!(all.len(), 9);
        assert!(!all.contains(&3));
    }

    #[test]
    fn fold_count_validated() {
        let ds = toy(5);
        assert!(split_folds(&ds, 0, 7).is_err());
        assert!(split_folds(&ds, 6, 7).is_err());
    }

    #[test]
    fn split_ratings_sizes() {
        let ratings: BTreeMap<ItemId, f64> = (0..10).map(|i| (i, i as f64)).collect();
        let (obs, hold) = split_user_ratings(&ratings, 0.7, 3).unwrap();
        assert_eq!(obs.len(), 7);
        assert_eq!(hold.len(), 3);
        // Partition: disjoint and exhaustive.
        for item in ratings.keys() {
            assert!(obs.contains_key(item) ^ hold.contains_key(item));
        }
    }

    #[test]
    fn split_ratings_clamps_to_nonempty() {
        let ratings: BTreeMap<ItemId, f64> = [(1, 4.0), (2, 5.0)].into();
        let (obs, hold) = split_user_ratings(&ratings, 0.7, 3).unwrap();
        assert_eq!(obs.len(), 1);
        assert_eq!(hold.len(), 1);

        let one: BTreeMap<ItemId, f64> = [(1, 4.0)].into();
        assert!(split_user_ratings(&one, 0.7, 3).is_err());
    }

    #[test]
    fn split_ratings_deterministic() {
        let ratings: BTreeMap<ItemId, f64> = (0..9).map(|i| (i, i as f64)).collect();
        assert_eq!(
            split_user_ratings(&ratings, 0.5, 11).unwrap(),
            split_user_ratings(&ratings, 0.5, 11).unwrap()
        );
    }
}
