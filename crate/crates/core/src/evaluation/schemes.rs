//! Obfuscation schemes and their per-user application.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{ItemId, Label};
use crate::error::{Error, Result};
use crate::factorization::AnalystModel;
use crate::protocol::{class_ratio, keep_probability, round_ratings, ObfuscatedFeedback};

/// The obfuscation scheme families under evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchemeKind {
    /// Raw ratings.
    #[serde(rename = "NO")]
    No,
    /// Midpoint shift.
    #[serde(rename = "MP")]
    Mp,
    /// Midpoint shift followed by stochastic rounding to the rating scale.
    #[serde(rename = "MPr")]
    MpRounded,
    /// Item training mean replaces each rating.
    #[serde(rename = "IA")]
    ItemAverage,
    /// A fair per-rating coin picks one class's training mean.
    #[serde(rename = "FA")]
    FeatureAverage,
    /// Sub-sampling only; kept items reveal raw ratings.
    #[serde(rename = "SS")]
    SubSample,
    /// Sub-sampling plus midpoint shift.
    #[serde(rename = "MPSS")]
    Mpss,
    /// Sub-sampling plus midpoint shift plus stochastic rounding.
    #[serde(rename = "MPSSr")]
    MpssRounded,
    /// Sub-sampling plus item-mean replacement.
    #[serde(rename = "SS_IA")]
    SsItemAverage,
    /// Sub-sampling plus class-mean replacement.
    #[serde(rename = "SS_FA")]
    SsFeatureAverage,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 10] = [
        SchemeKind::No,
        SchemeKind::Mp,
        SchemeKind::MpRounded,
        SchemeKind::ItemAverage,
        SchemeKind::FeatureAverage,
        SchemeKind::SubSample,
        SchemeKind::Mpss,
        SchemeKind::MpssRounded,
        SchemeKind::SsItemAverage,
        SchemeKind::SsFeatureAverage,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::No => "NO",
            SchemeKind::Mp => "MP",
            SchemeKind::MpRounded => "MPr",
            SchemeKind::ItemAverage => "IA",
            SchemeKind::FeatureAverage => "FA",
            SchemeKind::SubSample => "SS",
            SchemeKind::Mpss => "MPSS",
            SchemeKind::MpssRounded => "MPSSr",
            SchemeKind::SsItemAverage => "SS_IA",
            SchemeKind::SsFeatureAverage => "SS_FA",
        }
    }

    /// Whether the scheme drops items by the class-ratio Bernoulli law.
    pub fn subsamples(self) -> bool {
        matches!(
            self,
            SchemeKind::SubSample
                | SchemeKind::Mpss
                | SchemeKind::MpssRounded
                | SchemeKind::SsItemAverage
                | SchemeKind::SsFeatureAverage
        )
    }

    /// Whether revealed values are midpoint-shifted (y = r - x0 * bias).
    pub fn midpoint_shifts(self) -> bool {
        matches!(
            self,
            SchemeKind::Mp | SchemeKind::MpRounded | SchemeKind::Mpss | SchemeKind::MpssRounded
        )
    }

    /// Whether the scheme stochastically rounds to an integer range.
    pub fn rounds(self) -> bool {
        matches!(self, SchemeKind::MpRounded | SchemeKind::MpssRounded)
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<SchemeKind> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = SchemeKind::ALL.iter().map(|k| k.name()).collect();
                Error::InvalidArgument(format!(
                    "unknown scheme {s:?}; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// Integer rating range for stochastic rounding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundingRange {
    pub lo: i64,
    pub hi: i64,
}

/// A scheme plus its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scheme {
    pub kind: SchemeKind,
    /// Mixing level: each rating is independently obfuscated with
    /// probability alpha and passed through raw otherwise.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Required exactly for the rounding kinds (MPr, MPSSr).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounding: Option<RoundingRange>,
}

fn default_alpha() -> f64 {
    1.0
}

impl Scheme {
    /// A non-rounding scheme at full mixing level.
    pub fn plain(kind: SchemeKind) -> Scheme {
        Scheme { kind, alpha: 1.0, rounding: None }
    }

    /// A rounding scheme at full mixing level.
    pub fn rounded(kind: SchemeKind, lo: i64, hi: i64) -> Scheme {
        Scheme { kind, alpha: 1.0, rounding: Some(RoundingRange { lo, hi }) }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Scheme {
        self.alpha = alpha;
        self
    }

    /// Row label for reports: the kind name, with the mixing level appended
    /// when it is not 1.
    pub fn label(&self) -> String {
        if self.alpha == 1.0 {
            self.kind.name().to_string()
        } else {
            format!("{}(alpha={})", self.kind.name(), self.alpha)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!(
                "alpha {} outside [0, 1] for scheme {}",
                self.alpha,
                self.kind.name()
            )));
        }
        match (&self.rounding, self.kind.rounds()) {
            (None, true) => Err(Error::InvalidArgument(format!(
                "scheme {} requires a rounding range",
                self.kind.name()
            ))),
            (Some(_), false) => Err(Error::InvalidArgument(format!(
                "scheme {} does not round; remove the rounding range",
                self.kind.name()
            ))),
            (Some(r), true) if r.lo > r.hi => Err(Error::InvalidArgument(format!(
                "rounding range [{}, {}] is empty",
                r.lo, r.hi
            ))),
            _ => Ok(()),
        }
    }
}

/// The attack classifiers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Attacker {
    #[serde(rename = "LSE")]
    Lse,
    #[serde(rename = "LR")]
    Logistic,
    #[serde(rename = "NB")]
    NaiveBayes,
}

impl Attacker {
    pub const ALL: [Attacker; 3] = [Attacker::Lse, Attacker::Logistic, Attacker::NaiveBayes];

    pub fn name(self) -> &'static str {
        match self {
            Attacker::Lse => "LSE",
            Attacker::Logistic => "LR",
            Attacker::NaiveBayes => "NB",
        }
    }
}

impl fmt::Display for Attacker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Attacker {
    type Err = Error;

    fn from_str(s: &str) -> Result<Attacker> {
        Attacker::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| {
            Error::InvalidArgument(format!("unknown attacker {s:?}; expected LSE, LR or NB"))
        })
    }
}

/// How the analyst fills in the private coordinate when predicting for a
/// privacy-conscious user.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XhatPolicy {
    /// Midpoint for midpoint-shifted schemes, inferred sign otherwise.
    #[default]
    Auto,
    /// x_hat0 = 0: predictions carry no bias term.
    Midpoint,
    /// x_hat0 = the sign fitted by the least-squares attack on the
    /// submission read as raw ratings.
    InferredLse,
}

impl FromStr for XhatPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<XhatPolicy> {
        match s {
            "auto" => Ok(XhatPolicy::Auto),
            "midpoint" => Ok(XhatPolicy::Midpoint),
            "inferred_lse" => Ok(XhatPolicy::InferredLse),
            other => Err(Error::InvalidArgument(format!(
                "unknown x_hat0 policy {other:?}; expected auto, midpoint or inferred_lse"
            ))),
        }
    }
}

/// Applies one scheme to a user's solicited ratings.
///
/// Items are visited in ascending id order; per item the draws are, in
/// order: the alpha mixing coin (only when 0 < alpha < 1), the sub-sampling
/// keep draw (only when the scheme sub-samples and the keep probability is
/// interior), then any value-transform draws. A rating that loses the
/// mixing coin passes through raw and is never dropped, so alpha = 0 is
/// exactly the NO scheme.
pub fn apply_scheme<R: Rng>(
    scheme: &Scheme,
    s0: &BTreeMap<ItemId, f64>,
    label: Label,
    model: &AnalystModel,
    rng: &mut R,
) -> Result<ObfuscatedFeedback> {
    scheme.validate()?;
    let x0 = label.value();
    let mut revealed = Vec::with_capacity(s0.len());
    let mut values = Vec::with_capacity(s0.len());
    for (&item, &r) in s0 {
        let m = model
            .item(item)
            .ok_or_else(|| Error::InvalidData(format!("item {item} is not in the model")))?;
        let obfuscate = if scheme.alpha >= 1.0 {
            true
        } else if scheme.alpha <= 0.0 {
            false
        } else {
            rng.random_bool(scheme.alpha)
        };
        if !obfuscate {
            revealed.push(item);
            values.push(r);
            continue;
        }
        if scheme.kind.subsamples() {
            let keep = keep_probability(class_ratio(m.p_plus, m.p_minus)?, label);
            if !(keep >= 1.0 || (keep > 0.0 && rng.random_bool(keep))) {
                continue;
            }
        }
        let value = match scheme.kind {
            SchemeKind::No | SchemeKind::SubSample => r,
            SchemeKind::Mp | SchemeKind::Mpss => r - x0 * m.bias,
            SchemeKind::MpRounded | SchemeKind::MpssRounded => {
                let range = scheme.rounding.expect("validated above");
                round_ratings(&[r - x0 * m.bias], range.lo, range.hi, rng)?[0] as f64
            }
            SchemeKind::ItemAverage | SchemeKind::SsItemAverage => m.mean_all,
            SchemeKind::FeatureAverage | SchemeKind::SsFeatureAverage => {
                if rng.random_bool(0.5) {
                    m.mean_plus
                } else {
                    m.mean_minus
                }
            }
        };
        revealed.push(item);
        values.push(value);
    }
    ObfuscatedFeedback::new(revealed, values)
}
