//! Chain-matched Monte Carlo: a slot-level simulation of the reactive
//! handoff scenario under exactly the abstractions of the 3-D chain, used
//! to validate the analytical steady states.
//!
//! Channels follow the geometric ON/OFF process (completion probability
//! `v`, arrivals with probability `p` at free boundaries, back-to-back
//! restarts allowed). A backlogged SU pair accesses in a slot when at least
//! one channel was idle in the previous slot, picking uniformly among the
//! idle channels not held by another pair; two pairs picking the same
//! channel both stay backlogged. A transmitting pair suffers a collided
//! frame when a PU arrives on its channel; the doomed frame is carried for
//! `Ts` collided slots (or to the frame boundary) and then retransmitted
//! from the backlog of its own tier. Throughput is measured exactly as the
//! chain defines it: the fraction of slots spent in clean Transmitting
//! states.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainSimConfig {
    pub num_channels: usize,
    /// PU arrival probability per slot.
    pub p: f64,
    /// PU completion probability per slot (`v = 1 / mean packet length`).
    pub v: f64,
    /// SU packet arrival probability per slot.
    pub s: f64,
    pub slots_per_frame: u32,
    pub frames_per_packet: u32,
    /// Sensing delay in slots.
    pub ts: u32,
    pub num_pairs: usize,
    pub duration_slots: u64,
    /// Slots discarded before measuring.
    pub warmup_slots: u64,
    pub seed: u64,
    pub replication: u64,
}

/// Per-pair slot-status fractions over the measured window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSimStats {
    pub transmitting: Vec<f64>,
    pub collided: Vec<f64>,
    pub backlogged: Vec<f64>,
    pub idle: Vec<f64>,
    /// Same-slot same-pick conflicts observed (the simulated counterpart
    /// of `q`; stays near zero in the validation scenarios).
    pub access_conflicts: u64,
    pub measured_slots: u64,
}

impl ChainSimStats {
    /// Mean clean-transmitting fraction over the pairs: the simulated
    /// counterpart of the chain's normalized throughput.
    pub fn mean_throughput(&self) -> f64 {
        self.transmitting.iter().sum::<f64>() / self.transmitting.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PairState {
    Idle,
    Backlogged { tier: u32 },
    Transmitting { clean: u32, tier: u32, channel: usize },
    Collided { clean: u32, hit: u32, tier: u32, channel: usize },
}

pub fn run_chain_sim(cfg: &ChainSimConfig) -> ChainSimStats {
    assert!(cfg.num_channels >= 1 && cfg.num_pairs >= 1);
    assert!(cfg.ts >= 1 && cfg.ts <= cfg.slots_per_frame);
    let c = cfg.slots_per_frame;
    let h = cfg.frames_per_packet;

    let mut chan_rng: Vec<ChaCha8Rng> = (0..cfg.num_channels)
        .map(|ch| stream_rng(cfg.seed, "chainsim-channel", ch as u64, cfg.replication))
        .collect();
    let mut pair_rng: Vec<ChaCha8Rng> = (0..cfg.num_pairs)
        .map(|i| stream_rng(cfg.seed, "chainsim-pair", i as u64, cfg.replication))
        .collect();

    let mut busy = vec![false; cfg.num_channels];
    let mut held = vec![false; cfg.num_channels];
    let mut pairs = vec![PairState::Idle; cfg.num_pairs];

    let mut transmitting = vec![0u64; cfg.num_pairs];
    let mut collided = vec![0u64; cfg.num_pairs];
    let mut backlogged = vec![0u64; cfg.num_pairs];
    let mut idle = vec![0u64; cfg.num_pairs];
    let mut access_conflicts = 0u64;

    let mut picks: Vec<(usize, usize)> = Vec::with_capacity(cfg.num_pairs);
    let mut idle_free: Vec<usize> = Vec::with_capacity(cfg.num_channels);
    let mut busy_prev = vec![false; cfg.num_channels];

    for slot in 0..cfg.duration_slots {
        // Channel state for the upcoming slot; `busy_prev` is what a pair
        // observed while deciding to access.
        busy_prev.copy_from_slice(&busy);
        for (ch, b) in busy.iter_mut().enumerate() {
            let rng = &mut chan_rng[ch];
            *b = if *b {
                if rng.random::<f64>() < cfg.v {
                    // Completion boundary; a buffered packet may start
                    // back-to-back.
                    cfg.p > 0.0 && rng.random::<f64>() < cfg.p
                } else {
                    true
                }
            } else {
                cfg.p > 0.0 && rng.random::<f64>() < cfg.p
            };
        }

        // Access picks are resolved jointly so that two pairs choosing the
        // same channel both stay backlogged.
        picks.clear();
        for (id, state) in pairs.iter().enumerate() {
            if let PairState::Backlogged { .. } = state {
                idle_free.clear();
                idle_free.extend(
                    (0..cfg.num_channels).filter(|&ch| !busy_prev[ch] && !held[ch]),
                );
                if !idle_free.is_empty() {
                    let pick = idle_free[pair_rng[id].random_range(0..idle_free.len())];
                    picks.push((id, pick));
                }
            }
        }
        picks.sort_by_key(|&(_, ch)| ch);
        let mut granted: Vec<(usize, usize)> = Vec::with_capacity(picks.len());
        let mut w = 0;
        while w < picks.len() {
            let ch = picks[w].1;
            let same = picks[w..].iter().take_while(|&&(_, c2)| c2 == ch).count();
            if same == 1 {
                granted.push(picks[w]);
            } else {
                access_conflicts += same as u64;
            }
            w += same;
        }

        for (id, state) in pairs.iter_mut().enumerate() {
            let next = match *state {
                PairState::Idle => {
                    if pair_rng[id].random::<f64>() < cfg.s {
                        PairState::Backlogged { tier: 1 }
                    } else {
                        PairState::Idle
                    }
                }
                PairState::Backlogged { tier } => {
                    if let Some(&(_, ch)) = granted.iter().find(|&&(gid, _)| gid == id) {
                        held[ch] = true;
                        if busy[ch] {
                            PairState::Collided { clean: 0, hit: 1, tier, channel: ch }
                        } else {
                            PairState::Transmitting { clean: 1, tier, channel: ch }
                        }
                    } else {
                        PairState::Backlogged { tier }
                    }
                }
                PairState::Transmitting { clean, tier, channel } => {
                    if clean < c {
                        if busy[channel] {
                            PairState::Collided { clean, hit: 1, tier, channel }
                        } else {
                            PairState::Transmitting { clean: clean + 1, tier, channel }
                        }
                    } else if tier < h {
                        // Frame boundary: the next frame continues on the
                        // same channel.
                        if busy[channel] {
                            PairState::Collided { clean: 0, hit: 1, tier: tier + 1, channel }
                        } else {
                            PairState::Transmitting { clean: 1, tier: tier + 1, channel }
                        }
                    } else {
                        // Packet complete; the pair releases the channel.
                        held[channel] = false;
                        if pair_rng[id].random::<f64>() < cfg.s {
                            PairState::Backlogged { tier: 1 }
                        } else {
                            PairState::Idle
                        }
                    }
                }
                PairState::Collided { clean, hit, tier, channel } => {
                    let cap = cfg.ts.min(c - clean);
                    if hit < cap {
                        PairState::Collided { clean, hit: hit + 1, tier, channel }
                    } else {
                        // Detected (or frame boundary): vacate and
                        // retransmit the frame from this tier's backlog.
                        held[channel] = false;
                        PairState::Backlogged { tier }
                    }
                }
            };
            *state = next;

            if slot >= cfg.warmup_slots {
                match *state {
                    PairState::Idle => idle[id] += 1,
                    PairState::Backlogged { .. } => backlogged[id] += 1,
                    PairState::Transmitting { .. } => transmitting[id] += 1,
                    PairState::Collided { .. } => collided[id] += 1,
                }
            }
        }
    }

    let measured = cfg.duration_slots - cfg.warmup_slots;
    let frac = |v: Vec<u64>| -> Vec<f64> { v.into_iter().map(|n| n as f64 / measured as f64).collect() };
    ChainSimStats {
        transmitting: frac(transmitting),
        collided: frac(collided),
        backlogged: frac(backlogged),
        idle: frac(idle),
        access_conflicts,
        measured_slots: measured,
    }
}
