//! Distributional and algebraic invariants of the disclosure protocols.

mod common;

use common::{ks_statistic, ks_two_sample, random_catalog};
use mpkit::dataset::Label;
use mpkit::factorization::ExtendedItemProfile;
use mpkit::protocol::{
    estimate_profile, mp_disclose, mp_obfuscate, mpss_disclose, mpss_obfuscate,
};
use mpkit::seed;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

#[test]
fn ks_helper_flags_shifted_and_accepts_identical() {
    // Exact statistic on a hand-checked instance: F_a jumps at 1, 2, 3 and
    // F_b at 1.5, 4, so the sup gap is 1/2 just after 3.
    let d = ks_statistic(&[1.0, 2.0, 3.0], &[1.5, 4.0]);
    assert!((d - 0.5).abs() < 1e-15, "hand-checked statistic, got {d}");

    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut rng = seed::rng(11, &[seed::stream::SYNTH]);
    let a: Vec<f64> = (0..4000).map(|_| normal.sample(&mut rng)).collect();
    let b: Vec<f64> = (0..4000).map(|_| normal.sample(&mut rng)).collect();
    let same = ks_two_sample(&a, &b, 0.01);
    assert!(!same.rejects, "identical laws rejected: D = {}", same.d);

    let shifted: Vec<f64> = a.iter().map(|x| x + 0.25).collect();
    let diff = ks_two_sample(&shifted, &b, 0.01);
    assert!(diff.rejects, "quarter-sigma shift missed: D = {}", diff.d);
}

#[test]
fn midpoint_outputs_are_identically_distributed_across_classes() {
    let mut rng = seed::rng(21, &[seed::stream::SYNTH]);
    let catalog = random_catalog(&mut rng, 3, 8, 1.0);
    let x = [0.7, -0.4, 0.2];
    let sigma = 0.5;
    let disclosure = mp_disclose(&catalog).unwrap();
    let noise = Normal::new(0.0, sigma).unwrap();
    let n = 10_000;

    let mut samples = vec![[Vec::with_capacity(n), Vec::with_capacity(n)]; catalog.len()];
    for (slot, label) in [(0usize, Label::Plus), (1usize, Label::Minus)] {
        for _ in 0..n {
            let ratings: Vec<f64> = catalog
                .iter()
                .map(|item| {
                    let dot: f64 = x.iter().zip(&item.latent).map(|(a, b)| a * b).sum();
                    dot + label.value() * item.bias + noise.sample(&mut rng)
                })
                .collect();
            let feedback = mp_obfuscate(&ratings, label, &disclosure).unwrap();
            for (j, &w) in feedback.values.iter().enumerate() {
                samples[j][slot].push(w);
            }
        }
    }

    // Bonferroni across the per-item tests.
    let alpha = 0.01 / catalog.len() as f64;
    for (j, pair) in samples.iter().enumerate() {
        let outcome = ks_two_sample(&pair[0], &pair[1], alpha);
        assert!(
            !outcome.rejects,
            "item {j}: classes distinguishable, D = {} > {}",
            outcome.d, outcome.threshold
        );
    }
}

proptest! {
    #[test]
    fn re_adding_the_disclosed_shift_inverts_obfuscation(
        seed in 0u64..1000,
        d in 1usize..=4,
        n_items in 1usize..=6,
        label in prop_oneof![Just(Label::Plus), Just(Label::Minus)],
    ) {
        let mut rng = seed::rng(seed, &[seed::stream::SYNTH]);
        let catalog = random_catalog(&mut rng, d, n_items, 2.0);
        let ratings: Vec<f64> = (0..n_items).map(|_| rng.random_range(-10.0..=10.0)).collect();
        let disclosure = mp_disclose(&catalog).unwrap();
        let feedback = mp_obfuscate(&ratings, label, &disclosure).unwrap();
        for ((w, item), r) in feedback.values.iter().zip(&disclosure.items).zip(&ratings) {
            let recovered = w + label.value() * item.bias;
            prop_assert!((recovered - r).abs() <= 1e-12, "{recovered} != {r}");
        }
    }
}

#[test]
fn noiseless_feedback_recovers_the_profile_exactly() {
    for trial in 0..5 {
        let mut rng = seed::rng(trial, &[seed::stream::SYNTH, 1]);
        let catalog = random_catalog(&mut rng, 4, 9, 1.0);
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..=2.0)).collect();
        for label in [Label::Plus, Label::Minus] {
            let ratings: Vec<f64> = catalog
                .iter()
                .map(|item| {
                    let dot: f64 = x.iter().zip(&item.latent).map(|(a, b)| a * b).sum();
                    dot + label.value() * item.bias
                })
                .collect();
            let disclosure = mp_disclose(&catalog).unwrap();
            let feedback = mp_obfuscate(&ratings, label, &disclosure).unwrap();
            let estimate = estimate_profile(&catalog, &feedback, 0.0, 0.0).unwrap();
            for (k, (a, b)) in estimate.x_hat.iter().zip(&x).enumerate() {
                assert!(
                    (a - b).abs() <= 1e-9,
                    "trial {trial} coordinate {k}: {a} vs {b}"
                );
            }
            assert_eq!(estimate.expected_loss, 0.0);
        }
    }
}

#[test]
fn equal_probabilities_reveal_everything_for_both_classes() {
    let mut rng = seed::rng(31, &[seed::stream::SYNTH]);
    let catalog = random_catalog(&mut rng, 2, 4, 1.0);
    let probs = vec![(0.3, 0.3), (0.8, 0.8), (1.0, 1.0), (0.05, 0.05)];
    let disclosure = mpss_disclose(&catalog, &probs).unwrap();
    let s0: Vec<(u64, f64)> = catalog.iter().map(|item| (item.item_id, 1.5)).collect();
    for label in [Label::Plus, Label::Minus] {
        for _ in 0..200 {
            let feedback = mpss_obfuscate(&s0, label, &disclosure, &mut rng).unwrap();
            let revealed: Vec<u64> = s0.iter().map(|&(id, _)| id).collect();
            assert_eq!(feedback.revealed, revealed, "ratio 1 must keep every rating");
        }
    }
}

#[test]
fn reveal_frequency_matches_the_inclusion_law() {
    // One item per probability pair; users rate item j with the class
    // probability, then sub-sample. The end-to-end inclusion frequency must
    // match min(p+, p-) for both classes, including the p+ = 0 sentinel.
    let probs = [(1.0, 0.5), (0.5, 1.0), (0.3, 0.3), (0.0, 0.7), (0.9, 0.2), (0.6, 0.6)];
    let catalog: Vec<ExtendedItemProfile> = probs
        .iter()
        .enumerate()
        .map(|(idx, _)| ExtendedItemProfile {
            item_id: idx as u64 + 1,
            bias: 0.1 * (idx as f64 + 1.0),
            latent: vec![1.0],
        })
        .collect();
    let disclosure = mpss_disclose(&catalog, &probs).unwrap();
    let n = 10_000;

    let mut freq = [[0.0f64; 6]; 2];
    for (slot, label) in [(0usize, Label::Plus), (1usize, Label::Minus)] {
        let mut rng = seed::rng(41 + slot as u64, &[seed::stream::AGENT]);
        let mut counts = [0usize; 6];
        for _ in 0..n {
            let s0: Vec<(u64, f64)> = probs
                .iter()
                .enumerate()
                .filter(|(_, &(p_plus, p_minus))| {
                    let p = if label == Label::Plus { p_plus } else { p_minus };
                    p > 0.0 && (p >= 1.0 || rng.random_bool(p))
                })
                .map(|(idx, _)| (idx as u64 + 1, 2.0))
                .collect();
            let feedback = mpss_obfuscate(&s0, label, &disclosure, &mut rng).unwrap();
            for id in feedback.revealed {
                counts[(id - 1) as usize] += 1;
            }
        }
        for (j, &c) in counts.iter().enumerate() {
            freq[slot][j] = c as f64 / n as f64;
        }
    }

    for (j, &(p_plus, p_minus)) in probs.iter().enumerate() {
        let target = p_plus.min(p_minus);
        for slot in 0..2 {
            assert!(
                (freq[slot][j] - target).abs() <= 0.02,
                "item {j} class {slot}: frequency {} vs min {target}",
                freq[slot][j]
            );
        }
        assert!(
            (freq[0][j] - freq[1][j]).abs() <= 0.02,
            "item {j}: class frequencies differ: {} vs {}",
            freq[0][j], freq[1][j]
        );
    }
}
