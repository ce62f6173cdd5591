//! Helpers shared by the integration suite.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, BufWriter};
use std::net::TcpListener;

use mpkit::dataset::{SynthItem, SyntheticGroundTruth};
use mpkit::factorization::{AnalystModel, ExtendedItemProfile, ModelItem};
use mpkit::protocol::DisclosedItem;
use mpkit::wire::{write_message, WireMessage};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Two-sample Kolmogorov-Smirnov statistic sup_x |F_a(x) - F_b(x)|.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "KS needs nonempty samples");
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        // Advance past every sample <= the smaller current value, then
        // compare the empirical CDFs there; the sup is attained at sample
        // points, and once one sample is exhausted the gap only shrinks.
        let x = if xs[i] <= ys[j] { xs[i] } else { ys[j] };
        while i < xs.len() && xs[i] <= x {
            i += 1;
        }
        while j < ys.len() && ys[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Outcome of a two-sample KS test at level `alpha`.
pub struct KsOutcome {
    pub d: f64,
    pub threshold: f64,
    pub rejects: bool,
}

/// Two-sample KS test: rejects equality when the statistic exceeds
/// c(alpha) * sqrt((n + m) / (n * m)) with c(alpha) = sqrt(-ln(alpha/2)/2),
/// the asymptotic two-sided critical value.
pub fn ks_two_sample(a: &[f64], b: &[f64], alpha: f64) -> KsOutcome {
    let d = ks_statistic(a, b);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    let threshold = c * ((n + m) / (n * m)).sqrt();
    KsOutcome { d, threshold, rejects: d > threshold }
}

/// Random catalog with standard-normal latents (never all-zero) and
/// uniform biases in [-bias_scale, bias_scale].
pub fn random_catalog<R: Rng>(
    rng: &mut R,
    d: usize,
    n_items: usize,
    bias_scale: f64,
) -> Vec<ExtendedItemProfile> {
    let normal = Normal::new(0.0, 1.0).expect("valid std dev");
    (0..n_items)
        .map(|idx| {
            let mut latent: Vec<f64> = (0..d).map(|_| normal.sample(rng)).collect();
            if latent.iter().all(|&x| x == 0.0) {
                latent[0] = 1.0;
            }
            ExtendedItemProfile {
                item_id: idx as u64 + 1,
                bias: rng.random_range(-bias_scale..=bias_scale),
                latent,
            }
        })
        .collect()
}

/// The ground-truth catalog as profile structs, in item order.
pub fn catalog_from_truth(truth: &SyntheticGroundTruth) -> Vec<ExtendedItemProfile> {
    truth
        .items
        .iter()
        .map(|item| ExtendedItemProfile {
            item_id: item.id,
            bias: item.bias,
            latent: item.latent.clone(),
        })
        .collect()
}

/// An analyst model holding the exact ground-truth item parameters, with
/// class means derived from the clean rating model (mean latent is zero,
/// so the expected rating of a +-1 rater is +-bias).
pub fn model_from_truth(truth: &SyntheticGroundTruth) -> AnalystModel {
    let items = truth
        .items
        .iter()
        .map(|item: &SynthItem| ModelItem {
            id: item.id,
            bias: item.bias,
            latent: item.latent.clone(),
            p_plus: item.p_plus,
            p_minus: item.p_minus,
            mean_all: 0.0,
            mean_plus: item.bias,
            mean_minus: -item.bias,
        })
        .collect();
    AnalystModel {
        d: truth.d,
        label_name: Some("feature".to_string()),
        items,
        noise_sigma_hat: truth.noise_sigma,
    }
}

/// Accepts `n_sessions` connections, speaking the analyst side of the
/// protocol, and returns each session's Feedback line exactly as received.
pub fn capture_sessions(
    listener: TcpListener,
    items: Vec<DisclosedItem>,
    n_sessions: usize,
) -> Vec<String> {
    let mut lines = Vec::with_capacity(n_sessions);
    for sid in 1..=n_sessions as u64 {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut writer = BufWriter::new(stream);
        write_message(&mut writer, &WireMessage::Solicit { session_id: sid, items: items.clone() })
            .unwrap();
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        lines.push(line);
        write_message(&mut writer, &WireMessage::Estimate { session_id: sid, x_hat: vec![0.0] })
            .unwrap();
    }
    lines
}
