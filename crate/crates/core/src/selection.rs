//! Distributed channel selection for spectrum handoffs.
//!
//! The proposed scheme runs in three steps: every participant derives the
//! same pseudo-random selecting sequence from a shared slot seed, broadcasts
//! its candidate list in its mini slot (`W` broadcasts fit in one slot), and
//! then computes the whole assignment locally by walking the sequence and
//! granting each SU the best channel remaining in its list. Because every
//! participant evaluates the same pure function on the same replicated
//! context, the non-NULL picks are pairwise distinct: type 2 collisions are
//! structurally impossible.
//!
//! Three baselines are provided for comparison: random (uniform over the own
//! candidate list), greedy (a globally pre-ranked channel, identical for all
//! SUs, hence guaranteed collisions when several hand off together), and
//! local bargaining (collision-free picks bought with `2 * N` control
//! messages).

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::ChannelId;

/// SU (pair) identifier within a selection round.
pub type SuId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStrategy {
    Proposed,
    Random,
    Greedy,
    Bargaining,
}

/// Replicated context every participant holds after the broadcast step.
#[derive(Debug, Clone)]
pub struct SelectionContext {
    /// Participants in selecting-sequence order.
    pub participants: Vec<SuId>,
    /// Candidate lists, each duplicate-free and sorted by descending idle
    /// probability (ties by ascending channel id).
    pub candidate_lists: BTreeMap<SuId, Vec<(ChannelId, f64)>>,
    /// The shared slot-derived seed the sequence was generated from.
    pub sequence_seed: u64,
    /// Mini slots per time slot.
    pub mini_slots: u32,
}

/// Deterministic pseudo-random permutation of the participants. The same
/// `(seed, set)` always yields the same order; different slots yield
/// different orders in general.
pub fn generate_selection_sequence(seed: u64, participants: &[SuId]) -> Vec<SuId> {
    let mut order: Vec<SuId> = participants.to_vec();
    order.sort_unstable();
    order.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates over the canonically sorted set.
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    order
}

/// Whole slots consumed by the broadcast step: each participant broadcasts
/// exactly once in its mini slot, `w` per slot, continuing into following
/// slots until everyone has broadcast.
pub fn broadcast_rounds(num_participants: usize, w: u32) -> u64 {
    debug_assert!(w >= 1);
    (num_participants as u64).div_ceil(u64::from(w))
}

fn arg_max(list: &[(ChannelId, f64)]) -> Option<ChannelId> {
    list.iter()
        .copied()
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(ch, _)| ch)
}

/// Walks the selecting sequence and returns `me`'s assignment: each earlier
/// SU takes the arg-max of its remaining list and that channel is removed
/// from all later lists. `None` means the list was depleted and the SU must
/// wait for the next slot.
pub fn compute_target_channel(ctx: &SelectionContext, me: SuId) -> Option<ChannelId> {
    let mut lists = ctx.candidate_lists.clone();
    for &su in &ctx.participants {
        let pick = lists.get(&su).and_then(|l| arg_max(l));
        if su == me {
            return pick;
        }
        if let Some(ch) = pick {
            for list in lists.values_mut() {
                list.retain(|&(c, _)| c != ch);
            }
        }
    }
    None
}

/// Collision-free assignment map computed from one shared context. Each
/// entry equals what that participant obtains locally from
/// [`compute_target_channel`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub targets: BTreeMap<SuId, Option<ChannelId>>,
}

/// Runs the sequence walk once for all participants.
pub fn assignment(ctx: &SelectionContext) -> Assignment {
    let mut lists = ctx.candidate_lists.clone();
    let mut targets = BTreeMap::new();
    for &su in &ctx.participants {
        let pick = lists.get(&su).and_then(|l| arg_max(l));
        targets.insert(su, pick);
        if let Some(ch) = pick {
            for list in lists.values_mut() {
                list.retain(|&(c, _)| c != ch);
            }
        }
    }
    Assignment { targets }
}

/// Baseline selection. Returns the pick and the control-message overhead in
/// whole slots charged before the pair may resume.
///
/// Random and greedy exchange no broadcasts (cost 0); bargaining needs
/// `2 * N` messages at `w` per slot for a collision-free group assignment.
pub fn baseline_select(
    strategy: SelectionStrategy,
    ctx: &SelectionContext,
    me: SuId,
    global_rank: &[ChannelId],
    rng: &mut impl Rng,
) -> (Option<ChannelId>, u64) {
    let my_list = ctx.candidate_lists.get(&me).map(Vec::as_slice).unwrap_or(&[]);
    match strategy {
        SelectionStrategy::Proposed => {
            (compute_target_channel(ctx, me), broadcast_rounds(ctx.participants.len(), ctx.mini_slots))
        }
        SelectionStrategy::Random => {
            (my_list.choose(rng).map(|&(ch, _)| ch), 0)
        }
        SelectionStrategy::Greedy => {
            // Pre-determined: the first globally ranked channel present in
            // the candidate list, identical for every SU with the same list.
            let mine: std::collections::BTreeSet<ChannelId> =
                my_list.iter().map(|&(ch, _)| ch).collect();
            (global_rank.iter().copied().find(|ch| mine.contains(ch)), 0)
        }
        SelectionStrategy::Bargaining => {
            let cost = (2 * ctx.participants.len() as u64).div_ceil(u64::from(ctx.mini_slots));
            (compute_target_channel(ctx, me), cost)
        }
    }
}
