//! Counter-based seed derivation.
//!
//! One master seed deterministically fans out into independent ChaCha
//! streams, one per (purpose, fold, scheme, user, ...) coordinate. Results
//! are therefore bitwise reproducible no matter how work is scheduled across
//! threads: every consumer derives its own stream from the master seed and a
//! context path instead of sharing a mutable generator.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Stream-purpose tags; the first element of most derivation paths.
pub mod stream {
    pub const SYNTH: u64 = 0x01;
    pub const FOLDS: u64 = 0x02;
    pub const TRAIN: u64 = 0x03;
    pub const SPLIT: u64 = 0x04;
    pub const SCHEME: u64 = 0x05;
    pub const ATTACK: u64 = 0x06;
    pub const SELECT: u64 = 0x07;
    pub const ROUND: u64 = 0x08;
    pub const AGENT: u64 = 0x09;
    pub const DROP: u64 = 0x0a;
}

/// splitmix64 step: advances `state` and returns the mixed output.
///
/// The standard 64-bit finalizer; consecutive outputs are decorrelated even
/// for adjacent states, which is what makes counter-style derivation sound.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `master` and a context path.
///
/// Each path element is folded into the chain with an odd multiplier so that
/// paths of different lengths or contents cannot collide by concatenation
/// (`[a, b]` and `[a]` followed by `[b]` reach different states).
pub fn derive(master: u64, path: &[u64]) -> u64 {
    let mut state = master ^ 0xA076_1D64_78BD_642F;
    let mut out = splitmix64(&mut state);
    for &tag in path {
        let mut s = out
            .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
            .wrapping_add(1);
        out = splitmix64(&mut s);
    }
    out
}

/// ChaCha stream for the given derivation path.
pub fn rng(master: u64, path: &[u64]) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive(master, path))
}
