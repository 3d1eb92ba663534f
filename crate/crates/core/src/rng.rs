//! Seed derivation for deterministic, isolated random streams.
//!
//! Every stochastic entity in a run (each PU channel, each SU pair, each
//! per-slot selection sequence) owns its own generator, seeded by stably
//! mixing the master seed with a domain label and the entity/replication
//! indices. Adding or removing entities therefore never perturbs the draws
//! of the others, and the same `(seed, config)` always replays the same
//! trace.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer. Stable across platforms and releases.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a stream seed from `(master, domain, id, replication)`.
pub fn stream_seed(master: u64, domain: &str, id: u64, replication: u64) -> u64 {
    let mut acc = mix64(master);
    for &b in domain.as_bytes() {
        acc = mix64(acc ^ u64::from(b));
    }
    acc = mix64(acc ^ id);
    mix64(acc ^ replication.wrapping_mul(0xa076_1d64_78bd_642f))
}

/// A ChaCha8 generator for the derived stream.
pub fn stream_rng(master: u64, domain: &str, id: u64, replication: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(master, domain, id, replication))
}

/// Public per-slot seed shared by all nodes (the "time stamp" seed used for
/// the handoff selection sequence). Folds the scenario seed so separate runs
/// stay independent while all nodes within a run agree.
pub fn slot_seed(master: u64, slot: u64) -> u64 {
    mix64(mix64(master ^ 0x73c5_9d3e_a1b7_42d1) ^ slot)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_seeds_are_stable_and_distinct() {
        let a = stream_seed(42, "pu-channel", 3, 0);
        let b = stream_seed(42, "pu-channel", 3, 0);
        assert_eq!(a, b);
        assert_ne!(a, stream_seed(42, "pu-channel", 4, 0));
        assert_ne!(a, stream_seed(42, "pu-channel", 3, 1));
        assert_ne!(a, stream_seed(42, "su-pair", 3, 0));
        assert_ne!(a, stream_seed(43, "pu-channel", 3, 0));
    }

    #[test]
    fn mix64_spreads_consecutive_inputs() {
        // Consecutive slots must not produce correlated low bits.
        let mut ones = 0u32;
        for slot in 0..1024u64 {
            ones += (slot_seed(7, slot) & 1) as u32;
        }
        assert!((400..=624).contains(&ones), "bit bias: {ones}/1024");
    }
}
