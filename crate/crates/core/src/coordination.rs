//! Channel-hopping sequence generation and slot-level rendezvous semantics.
//!
//! Two coordination schemes are supported. Under the single-rendezvous
//! scheme all idle SUs follow one shared cyclic sequence, so at most one
//! pair can establish a link per slot. Under the multiple-rendezvous scheme
//! each node hops on its own pseudo-random but publicly computable sequence
//! and link agreements on distinct channels are independent.

use serde::{Deserialize, Serialize};

use crate::model::ChannelId;
use crate::rng::mix64;

/// Node identifier; hopping sequences are a function of `(scheme, node, slot)`.
pub type NodeId = u32;

/// Pair identifier used by the rendezvous resolver.
pub type PairId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoppingScheme {
    /// Common Hopping: the shared cyclic sequence 1, 2, ..., M.
    SingleRendezvous { num_channels: ChannelId },
    /// McMAC-style: per-node pseudo-random sequences derived from a public
    /// base seed, so every node can compute every other node's sequence.
    MultipleRendezvous { num_channels: ChannelId, seed_base: u64 },
}

impl HoppingScheme {
    pub fn num_channels(&self) -> ChannelId {
        match *self {
            HoppingScheme::SingleRendezvous { num_channels } => num_channels,
            HoppingScheme::MultipleRendezvous { num_channels, .. } => num_channels,
        }
    }
}

/// Hop channel of `node` at `slot`.
pub fn hop_channel(scheme: &HoppingScheme, node: NodeId, slot: u64) -> ChannelId {
    match *scheme {
        HoppingScheme::SingleRendezvous { num_channels } => {
            cyclic_channel(num_channels, slot)
        }
        HoppingScheme::MultipleRendezvous { num_channels, seed_base } => {
            let node_seed = mix64(seed_base ^ (u64::from(node) << 1 | 1));
            let draw = mix64(node_seed ^ slot.wrapping_mul(0x9e37_79b9_7f4a_7c15));
            (draw % u64::from(num_channels)) as ChannelId + 1
        }
    }
}

/// The shared cyclic sequence used by all SUs while performing spectrum
/// handoffs (and by everyone under single rendezvous).
pub fn handoff_hop_channel(num_channels: ChannelId, slot: u64) -> ChannelId {
    cyclic_channel(num_channels, slot)
}

fn cyclic_channel(num_channels: ChannelId, slot: u64) -> ChannelId {
    (slot % u64::from(num_channels)) as ChannelId + 1
}

/// A pair that paused hopping resumes at the scheme's channel for the
/// resume slot; there is no phase memory. During a spectrum handoff the
/// pair instead follows [`handoff_hop_channel`].
pub fn rejoin_hopping(scheme: &HoppingScheme, node: NodeId, slot: u64) -> ChannelId {
    hop_channel(scheme, node, slot)
}

/// Outcome of one transmitter's rendezvous attempt in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RendezvousOutcome {
    /// RTS and CTS completed within the slot; the pair owns the channel.
    LinkEstablished(ChannelId),
    /// Two or more transmitters sent RTS on the same channel.
    Type1Collision,
    /// The target channel was occupied (PU, or an established SU link).
    ChannelBusy,
    /// The attempt was not made (e.g. the intended receiver is unavailable).
    NoAttempt,
}

/// Resolves all RTS attempts of one slot. `contenders` maps each attempting
/// transmitter pair to the channel it targets (the receiver's hop channel);
/// `busy` reports per-channel occupancy (PU or SU) for this slot, indexed by
/// `channel - 1`.
///
/// Per channel: occupied means every contender gets [`RendezvousOutcome::ChannelBusy`];
/// a sole contender wins; two or more all suffer a type 1 collision. Under
/// multiple rendezvous, outcomes on distinct channels are independent, which
/// this per-channel resolution provides for free.
pub fn attempt_rendezvous(
    contenders: &[(PairId, ChannelId)],
    busy: &[bool],
) -> Vec<(PairId, RendezvousOutcome)> {
    let mut per_channel: std::collections::BTreeMap<ChannelId, Vec<PairId>> =
        std::collections::BTreeMap::new();
    for &(pair, ch) in contenders {
        per_channel.entry(ch).or_default().push(pair);
    }
    let mut out = Vec::with_capacity(contenders.len());
    for (ch, pairs) in per_channel {
        let occupied = busy.get(usize::from(ch) - 1).copied().unwrap_or(false);
        let outcome = if occupied {
            RendezvousOutcome::ChannelBusy
        } else if pairs.len() == 1 {
            RendezvousOutcome::LinkEstablished(ch)
        } else {
            RendezvousOutcome::Type1Collision
        };
        for pair in pairs {
            out.push((pair, outcome));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_rendezvous_cycles_through_channels() {
        let scheme = HoppingScheme::SingleRendezvous { num_channels: 4 };
        let seq: Vec<ChannelId> = (0..5).map(|t| hop_channel(&scheme, 9, t)).collect();
        assert_eq!(seq, vec![1, 2, 3, 4, 1]);
        // All nodes share the sequence.
        assert_eq!(hop_channel(&scheme, 0, 7), hop_channel(&scheme, 5, 7));
        assert_eq!(rejoin_hopping(&scheme, 2, 7), 4);
    }

    #[test]
    fn multiple_rendezvous_is_deterministic_per_node() {
        let scheme = HoppingScheme::MultipleRendezvous { num_channels: 5, seed_base: 77 };
        for slot in 0..64 {
            let a = hop_channel(&scheme, 3, slot);
            assert_eq!(a, hop_channel(&scheme, 3, slot));
            assert!((1..=5).contains(&a));
        }
        assert_eq!(rejoin_hopping(&scheme, 3, 40), hop_channel(&scheme, 3, 40));
    }

    /// Two distinct nodes land on the same channel with frequency ~ 1/M.
    #[test]
    fn per_slot_channel_match_frequency_is_uniform() {
        let m = 8u16;
        let scheme = HoppingScheme::MultipleRendezvous { num_channels: m, seed_base: 1234 };
        let slots = 10_000u64;
        let matches = (0..slots)
            .filter(|&t| hop_channel(&scheme, 1, t) == hop_channel(&scheme, 2, t))
            .count();
        let freq = matches as f64 / slots as f64;
        let expect = 1.0 / f64::from(m);
        assert!(
            (freq - expect).abs() / expect < 0.05,
            "match frequency {freq:.5} vs 1/M = {expect:.5}"
        );
    }

    #[test]
    fn lone_contender_establishes_link_on_idle_channel() {
        let busy = vec![false; 4];
        let out = attempt_rendezvous(&[(0, 2)], &busy);
        assert_eq!(out, vec![(0, RendezvousOutcome::LinkEstablished(2))]);
    }

    #[test]
    fn same_channel_contention_is_a_type1_collision() {
        // Single rendezvous: both pairs target the common hop channel.
        let busy = vec![false; 4];
        let out = attempt_rendezvous(&[(0, 3), (1, 3)], &busy);
        assert!(out.iter().all(|&(_, o)| o == RendezvousOutcome::Type1Collision));
    }

    #[test]
    fn distinct_channels_establish_independently() {
        // Multiple rendezvous: receivers hop on different channels.
        let busy = vec![false; 4];
        let mut out = attempt_rendezvous(&[(0, 1), (1, 4)], &busy);
        out.sort_by_key(|&(p, _)| p);
        assert_eq!(out[0], (0, RendezvousOutcome::LinkEstablished(1)));
        assert_eq!(out[1], (1, RendezvousOutcome::LinkEstablished(4)));
    }

    #[test]
    fn rendezvous_never_succeeds_on_a_busy_channel() {
        let mut busy = vec![false; 4];
        busy[1] = true;
        let out = attempt_rendezvous(&[(0, 2), (1, 2)], &busy);
        assert!(out.iter().all(|&(_, o)| o == RendezvousOutcome::ChannelBusy));
    }
}
