//! Slot-loop orchestration of the full handoff protocol: PU channel
//! processes, channel-hopping rendezvous, the proactive handoff protocol
//! and the reactive baseline, the channel-selection schemes, and metric
//! accrual.
//!
//! Slot processing order: PU channel updates, SU packet arrivals, resume
//! verifications, rendezvous resolution, handoff progression (candidate
//! lists, broadcast rounds, agreement), frame accounting with the switch
//! policy, next-slot RTS decisions, then classification. Every stochastic
//! entity draws from its own derived stream, so a run is bit-deterministic
//! under its seed and adding a silent pair never perturbs the others.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{
    ConfigError, CoordinationKind, HandoffMode, ResolvedScenario, ScenarioConfig, SuRateSpec,
};
use crate::coordination::{attempt_rendezvous, hop_channel, handoff_hop_channel, HoppingScheme, RendezvousOutcome};
use crate::metrics::{
    percentile, HandoffCause, HandoffRecord, HandoffStats, MetricsReport, PerSuMetrics,
    ReplicationSummary, SlotBuckets, SlotFractions,
};
use crate::model::{advance_pu_channel, next_su_arrival_gap, ChannelState};
use crate::prediction::{prob_idle_at_slot, prob_off_exceeds};
use crate::rng::{mix64, slot_seed, stream_rng};
use crate::selection::{
    assignment, generate_selection_sequence, SelectionContext, SelectionStrategy,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("unknown sweep axis `{0}`")]
    UnknownAxis(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Doom {
    /// Collided slots since the overlap began (the doomed remainder of the
    /// frame counts as collided whether or not the PU is still present).
    slots: u32,
    su_su: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Service {
    arrival_slot: u64,
    frames_done: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum HoStage {
    /// Candidate computation (or waiting out an empty candidate list).
    Pending,
    /// In the broadcast group, messages still outstanding.
    AwaitTurn,
    /// Broadcast done, waiting for the round to finish.
    AwaitGroup,
    /// Channel-switching request/acknowledgement this slot.
    Agree { target: u16 },
    /// Verify the target and start the frame this slot.
    Resume { target: u16 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Handoff {
    started: u64,
    /// Earliest slot at which the Pending stage may act again.
    wait_until: u64,
    cause: HandoffCause,
    missed: bool,
    stage: HoStage,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Hopping,
    /// RTS/CTS exchanged; data begins at `start`.
    PendingStart { channel: u16, start: u64 },
    Transmitting { channel: u16, frame_slot: u32, doom: Option<Doom> },
    Handoff(Handoff),
}

struct Pair {
    x: f64,
    rng: ChaCha8Rng,
    phase: Phase,
    queued: bool,
    arrival_slot: u64,
    next_arrival: u64,
    service: Option<Service>,
    last_channel: Option<u16>,
    rts_intent: Option<u16>,
    backoff_until: u64,
    backoff_attempts: u32,
    pu_overlap_prev: bool,
    /// Classification of the current slot recorded by the frame step
    /// (phase transitions at slot end would otherwise misbucket it).
    slot_stamp: Option<(u64, u16)>,
    // Accounting.
    buckets: SlotBuckets,
    completed_packets: u64,
    completed_frames: u64,
    su_pu_events: u64,
    service_slots_sum: u64,
    trace_digest: u64,
}

/// Broadcast group shared by all SUs currently performing a handoff under
/// the proposed or bargaining scheme. Latecomers merge into the running
/// round; the selecting sequence is the publicly observed broadcast order.
struct Group {
    queue: std::collections::VecDeque<u32>,
    units_left: std::collections::BTreeMap<u32, u32>,
    roster: Vec<u32>,
    lists: std::collections::BTreeMap<u32, Vec<(u16, f64)>>,
}

impl Group {
    fn new() -> Self {
        Self {
            queue: Default::default(),
            units_left: Default::default(),
            roster: Vec::new(),
            lists: Default::default(),
        }
    }

    fn join(&mut self, pair: u32, units: u32, list: Vec<(u16, f64)>) {
        self.units_left.insert(pair, units);
        self.lists.insert(pair, list);
        for _ in 0..units {
            self.queue.push_back(pair);
        }
    }
}

/// Static per-channel forecast inputs: the prediction formulas depend only
/// on the channel's arrival probability and the PU packet length, so they
/// are computed once per scenario.
struct ChannelStatics {
    /// Pr(idle at the next slot), the candidate metric.
    idle_next: f64,
    /// Pr(idle at the end of the upcoming frame horizon eta).
    idle_eta: f64,
    /// Pr(OFF period outlasts eta).
    off_tail: f64,
}

pub struct SweepRow {
    pub value: f64,
    pub replication: u64,
    pub report: MetricsReport,
}

pub struct SweepTable {
    pub axis: String,
    pub rows: Vec<SweepRow>,
}

/// Serializable sweep output: one summary per axis value plus the raw rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSummaryRow {
    pub value: f64,
    pub summary: ReplicationSummary,
}

pub fn run_scenario(resolved: &ResolvedScenario, replication: u64) -> MetricsReport {
    Simulation::new(resolved, replication).run()
}

/// Runs all configured replications (in parallel) and the summary.
pub fn run_replications(
    cfg: &ScenarioConfig,
) -> Result<(Vec<MetricsReport>, ReplicationSummary), ConfigError> {
    let resolved = cfg.resolve()?;
    let mut reports: Vec<MetricsReport> = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|rep| run_scenario(&resolved, rep))
        .collect();
    reports.sort_by_key(|r| r.replication);
    let summary = ReplicationSummary::from_reports(&reports);
    Ok((reports, summary))
}

/// Applies `value` to the named axis of a base configuration.
pub fn apply_axis(base: &ScenarioConfig, axis: &str, value: f64) -> Result<ScenarioConfig, EngineError> {
    let mut cfg = base.clone();
    match axis {
        "num_su_pairs" => cfg.num_su_pairs = value as usize,
        "num_channels" => cfg.num_channels = value as u16,
        "su_rate_pps" => cfg.su_traffic = SuRateSpec::RatePps(value),
        "pu_rate_pps" => cfg.pu_rate = crate::config::PuRateSpec::RatePps(value),
        "chi" => cfg.sensing_error_chi = value,
        "sensing_delay_slots" => cfg.sensing_delay_slots = Some(value as u32),
        "pu_packet_slots" => cfg.pu_packet = crate::model::PuPacketLength::Fixed(value as u32),
        "frames_per_packet" => cfg.frames_per_packet = value as u32,
        "slots_per_frame" => cfg.slots_per_frame = value as u32,
        "mini_slots" => cfg.mini_slots = value as u32,
        "duration_slots" => cfg.duration_slots = value as u64,
        other => return Err(EngineError::UnknownAxis(other.to_string())),
    }
    Ok(cfg)
}

/// One report per (axis value, replication), with shared per-replication
/// seeds across the axis (common random numbers).
pub fn run_sweep(
    base: &ScenarioConfig,
    axis: &str,
    values: &[f64],
) -> Result<SweepTable, EngineError> {
    let mut rows = Vec::new();
    for &value in values {
        let cfg = apply_axis(base, axis, value)?;
        let resolved = cfg.resolve()?;
        let mut reports: Vec<MetricsReport> = (0..cfg.replications as u64)
            .into_par_iter()
            .map(|rep| run_scenario(&resolved, rep))
            .collect();
        reports.sort_by_key(|r| r.replication);
        for report in reports {
            rows.push(SweepRow { value, replication: report.replication, report });
        }
    }
    Ok(SweepTable { axis: axis.to_string(), rows })
}

struct Simulation<'a> {
    r: &'a ResolvedScenario,
    replication: u64,
    live_sensing: bool,
    scheme: HoppingScheme,
    statics: Vec<ChannelStatics>,
    greedy_rank: Vec<u16>,
    channels: Vec<ChannelState>,
    chan_rngs: Vec<ChaCha8Rng>,
    pu_busy: Vec<bool>,
    /// Channels whose in-flight PU packet has been corrupted by SU overlap
    /// and will be retransmitted.
    pu_retx: Vec<bool>,
    held: Vec<u32>,
    pairs: Vec<Pair>,
    group: Option<Group>,
    records: Vec<HandoffRecord>,
    type1_collisions: u64,
    su_su_events: u64,
    su_pu_events: u64,
    su_pu_overlap_slots: u64,
}

impl<'a> Simulation<'a> {
    fn new(r: &'a ResolvedScenario, replication: u64) -> Self {
        let cfg = &r.cfg;
        let m = usize::from(cfg.num_channels);
        let scheme = match cfg.coordination {
            CoordinationKind::Single => {
                HoppingScheme::SingleRendezvous { num_channels: cfg.num_channels }
            }
            CoordinationKind::Multiple => HoppingScheme::MultipleRendezvous {
                num_channels: cfg.num_channels,
                seed_base: mix64(cfg.seed ^ 0x68f7_3a1c_90be_5d27),
            },
        };
        let mean_l = r.pu_mean_packet_slots();
        let statics: Vec<ChannelStatics> = (0..m)
            .map(|ch| {
                let x = r.pu_p[ch];
                let l = mean_l.round().max(1.0) as u32;
                ChannelStatics {
                    idle_next: prob_idle_at_slot(1, x, l),
                    idle_eta: prob_idle_at_slot(r.eta, x, l),
                    off_tail: prob_off_exceeds(r.eta, x),
                }
            })
            .collect();
        // Greedy pre-ranking: long-run idle fraction, descending, ties by id.
        let mut greedy_rank: Vec<u16> = (1..=cfg.num_channels).collect();
        let idle_frac = |ch: u16| -> f64 {
            let p = r.pu_p[usize::from(ch) - 1];
            if p <= 0.0 {
                1.0
            } else {
                (1.0 - p) / (p * mean_l + 1.0 - p)
            }
        };
        greedy_rank.sort_by(|&a, &b| idle_frac(b).total_cmp(&idle_frac(a)).then(a.cmp(&b)));

        let pairs = (0..cfg.num_su_pairs)
            .map(|i| {
                let mut rng = stream_rng(cfg.seed, "su-pair", i as u64, replication);
                let x = r.su_x[i];
                let next_arrival = if x <= 0.0 {
                    u64::MAX
                } else {
                    let gap = next_su_arrival_gap(&r.su_params(i), &mut rng).expect("x > 0");
                    gap - u64::from(r.min_gap)
                };
                Pair {
                    x,
                    rng,
                    phase: Phase::Hopping,
                    queued: false,
                    arrival_slot: 0,
                    next_arrival,
                    service: None,
                    last_channel: None,
                    rts_intent: None,
                    backoff_until: 0,
                    backoff_attempts: 0,
                    pu_overlap_prev: false,
                    slot_stamp: None,
                    buckets: SlotBuckets::default(),
                    completed_packets: 0,
                    completed_frames: 0,
                    su_pu_events: 0,
                    service_slots_sum: 0,
                    trace_digest: 0x9e37_79b9,
                }
            })
            .collect();

        Self {
            r,
            replication,
            live_sensing: Self::is_live_sensing(cfg.handoff_mode),
            scheme,
            statics,
            greedy_rank,
            channels: (1..=cfg.num_channels).map(ChannelState::idle).collect(),
            chan_rngs: (0..m)
                .map(|ch| stream_rng(cfg.seed, "pu-channel", ch as u64, replication))
                .collect(),
            pu_busy: vec![false; m],
            pu_retx: vec![false; m],
            held: vec![0; m],
            pairs,
            group: None,
            records: Vec::new(),
            type1_collisions: 0,
            su_su_events: 0,
            su_pu_overlap_slots: 0,
            su_pu_events: 0,
        }
    }

    /// Scanning-radio view of a channel's PU state, with the sensing-error
    /// flip drawn from the observing pair's stream.
    fn sensed_pu(&self, pair_rng: &mut ChaCha8Rng, ch: usize) -> bool {
        let chi = self.r.cfg.sensing_error_chi;
        if chi > 0.0 && pair_rng.random::<f64>() < chi {
            !self.pu_busy[ch]
        } else {
            self.pu_busy[ch]
        }
    }

    fn rendezvous_channel(&self, pair: usize, slot: u64) -> u16 {
        match self.scheme {
            HoppingScheme::SingleRendezvous { .. } => {
                handoff_hop_channel(self.r.cfg.num_channels, slot)
            }
            HoppingScheme::MultipleRendezvous { .. } => {
                // The receiver node of pair i.
                hop_channel(&self.scheme, (2 * pair + 1) as u32, slot)
            }
        }
    }

    /// Candidate list (LSC), excluding the channel the pair just vacated.
    ///
    /// Both modes share the prediction filter and the protocol-level
    /// knowledge of which channels other SU links hold. Only the proactive
    /// protocol has the scanning radio's live PU view (corrupted by chi);
    /// the reactive baseline selects on prediction alone.
    fn candidate_list(&mut self, pair: usize, exclude: Option<u16>) -> Vec<(u16, f64)> {
        let th = self.r.thresholds();
        let mut rng = self.pairs[pair].rng.clone();
        let mut list: Vec<(u16, f64)> = Vec::new();
        for ch in 0..self.statics.len() {
            let id = (ch + 1) as u16;
            if Some(id) == exclude {
                continue;
            }
            if self.held[ch] > 0 {
                continue;
            }
            if self.live_sensing && self.sensed_pu(&mut rng, ch) {
                continue;
            }
            let st = &self.statics[ch];
            if st.idle_next >= th.tau_high && st.off_tail >= th.theta {
                list.push((id, st.idle_next));
            }
        }
        self.pairs[pair].rng = rng;
        list.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        list
    }

    fn run(mut self) -> MetricsReport {
        let cfg = &self.r.cfg;
        let duration = cfg.duration_slots;
        let warmup = self.r.warmup_slots;
        let n = cfg.num_su_pairs;
        let mut held_at_step: Vec<u32> = vec![0; self.held.len()];

        for slot in 0..duration {
            // 1. PU channel processes. A corrupted packet re-enters service
            // at its completion boundary instead of leaving.
            for ch in 0..self.channels.len() {
                let params = self.r.pu_params(ch);
                let was_on = self.channels[ch].is_on();
                let mut next =
                    advance_pu_channel(&self.channels[ch], &params, &mut self.chan_rngs[ch]);
                if self.pu_retx[ch] && was_on {
                    let completed = !next.is_on() || next.pending_pu_packet;
                    if completed {
                        next = ChannelState {
                            channel_id: next.channel_id,
                            occupancy: crate::model::Occupancy::On {
                                remaining_slots: self.pu_fresh_len(ch),
                            },
                            pending_pu_packet: false,
                        };
                        self.pu_retx[ch] = false;
                    }
                }
                self.channels[ch] = next;
                self.pu_busy[ch] = self.channels[ch].is_on();
            }

            // 2. SU packet arrivals (single-packet queue per pair; the next
            // packet materializes only once the previous one finished).
            for pair in self.pairs.iter_mut() {
                if !pair.queued && pair.service.is_none() && slot >= pair.next_arrival {
                    pair.queued = true;
                    pair.arrival_slot = slot;
                    let gap = next_su_arrival_gap(
                        &crate::model::SuTrafficParams {
                            normalized_arrival: pair.x,
                            min_gap: self.r.min_gap,
                        },
                        &mut pair.rng,
                    )
                    .expect("x > 0 when next_arrival is finite");
                    pair.next_arrival = slot + gap;
                }
            }

            // 3. Promote completed RTS/CTS exchanges into data transmission.
            for idx in 0..n {
                if let Phase::PendingStart { channel, start } = self.pairs[idx].phase {
                    if start == slot {
                        self.pairs[idx].phase =
                            Phase::Transmitting { channel, frame_slot: 1, doom: None };
                    }
                }
            }

            // 4a. Resume verifications (claims applied after all checks so
            // simultaneous resumers onto one channel are both admitted and
            // collide, which is exactly the type 2 failure mode).
            let mut resumed: Vec<(usize, u16)> = Vec::new();
            for idx in 0..n {
                let Phase::Handoff(ho) = self.pairs[idx].phase else { continue };
                let HoStage::Resume { target } = ho.stage else { continue };
                let ch = usize::from(target) - 1;
                // Frame-start confirmation by the scanning radio; the
                // reactive baseline resumes blind.
                let busy = if self.live_sensing {
                    let mut rng = self.pairs[idx].rng.clone();
                    let b = self.sensed_pu(&mut rng, ch) || self.held[ch] > 0;
                    self.pairs[idx].rng = rng;
                    b
                } else {
                    false
                };
                if busy {
                    // Prediction miss: relaunch the handoff.
                    let mut ho = ho;
                    ho.missed = true;
                    ho.stage = HoStage::Pending;
                    ho.wait_until = slot + 1;
                    self.pairs[idx].last_channel = Some(target);
                    self.pairs[idx].phase = Phase::Handoff(ho);
                } else {
                    resumed.push((idx, target));
                }
            }
            for &(idx, target) in &resumed {
                let Phase::Handoff(ho) = self.pairs[idx].phase else { unreachable!() };
                self.held[usize::from(target) - 1] += 1;
                self.pairs[idx].phase =
                    Phase::Transmitting { channel: target, frame_slot: 1, doom: None };
                self.records.push(HandoffRecord {
                    pair: idx as u32,
                    start_slot: ho.started,
                    resume_slot: slot,
                    target_channel: target,
                    cause: if ho.missed { HandoffCause::PredictionMiss } else { ho.cause },
                });
            }

            // 4b. Rendezvous resolution for RTS intents set last slot.
            let contenders: Vec<(u32, u16)> = (0..n)
                .filter_map(|idx| self.pairs[idx].rts_intent.map(|ch| (idx as u32, ch)))
                .collect();
            if !contenders.is_empty() {
                let busy: Vec<bool> = (0..self.held.len())
                    .map(|ch| self.pu_busy[ch] || self.held[ch] > 0)
                    .collect();
                for (pid, outcome) in attempt_rendezvous(&contenders, &busy) {
                    let idx = pid as usize;
                    self.pairs[idx].rts_intent = None;
                    match outcome {
                        RendezvousOutcome::LinkEstablished(ch) => {
                            self.held[usize::from(ch) - 1] += 1;
                            self.pairs[idx].phase =
                                Phase::PendingStart { channel: ch, start: slot + 1 };
                            self.pairs[idx].queued = false;
                            self.pairs[idx].service = Some(Service {
                                arrival_slot: self.pairs[idx].arrival_slot,
                                frames_done: 0,
                            });
                            self.pairs[idx].backoff_attempts = 0;
                        }
                        RendezvousOutcome::Type1Collision => {
                            if slot >= warmup {
                                self.type1_collisions += 1;
                            }
                            let p = &mut self.pairs[idx];
                            p.backoff_attempts = (p.backoff_attempts + 1).min(6);
                            let window = 1u64 << p.backoff_attempts;
                            p.backoff_until = slot + 1 + p.rng.random_range(0..window);
                        }
                        RendezvousOutcome::ChannelBusy | RendezvousOutcome::NoAttempt => {}
                    }
                }
            }

            // 5. Handoff progression.
            self.handoff_step(slot);

            // 6. Frame accounting for transmitting pairs.
            held_at_step.copy_from_slice(&self.held);
            let measure = slot >= warmup;
            for idx in 0..n {
                self.transmit_step(idx, slot, &held_at_step, measure);
            }

            // 7. Next-slot RTS decisions.
            for idx in 0..n {
                let p = &self.pairs[idx];
                if !matches!(p.phase, Phase::Hopping) || !p.queued {
                    continue;
                }
                if p.rts_intent.is_some() || slot < p.backoff_until {
                    continue;
                }
                let rc = self.rendezvous_channel(idx, slot + 1);
                let ch = usize::from(rc) - 1;
                let busy = if self.held[ch] > 0 {
                    true
                } else if self.live_sensing {
                    let mut rng = self.pairs[idx].rng.clone();
                    let b = self.sensed_pu(&mut rng, ch);
                    self.pairs[idx].rng = rng;
                    b
                } else {
                    false
                };
                let th = self.r.thresholds();
                let st = &self.statics[ch];
                if !busy && st.idle_next >= th.tau_high && st.off_tail >= th.theta {
                    self.pairs[idx].rts_intent = Some(rc);
                }
            }

            // 8. Classification. Pairs that spent the slot transmitting
            // carry a stamp from the frame step (their phase may already
            // have moved on); everyone else classifies by phase.
            let measure = slot >= warmup;
            for idx in 0..n {
                let p = &mut self.pairs[idx];
                let (code, channel) = match p.slot_stamp.take() {
                    Some(stamp) => stamp,
                    None => match p.phase {
                        Phase::Hopping => (if p.queued { 1u64 } else { 0 }, 0u16),
                        Phase::PendingStart { channel, .. } => (2, channel),
                        Phase::Transmitting { channel, doom, .. } => {
                            (if doom.is_some() { 4 } else { 3 }, channel)
                        }
                        Phase::Handoff(_) => (5, 0),
                    },
                };
                if measure {
                    match code {
                        0 => p.buckets.idle += 1,
                        1 | 2 => p.buckets.backlogged += 1,
                        3 => p.buckets.transmitting += 1,
                        4 => p.buckets.collided += 1,
                        _ => p.buckets.handoff_overhead += 1,
                    }
                }
                p.trace_digest =
                    mix64(p.trace_digest ^ (code | (u64::from(channel) << 8) ^ (slot << 24)));
            }
        }

        self.finish()
    }

    fn handoff_step(&mut self, slot: u64) {
        let cfg = &self.r.cfg;
        let n = cfg.num_su_pairs;
        let strategy = cfg.selection;
        let hop = usize::from(handoff_hop_channel(cfg.num_channels, slot)) - 1;
        let hop_busy = self.pu_busy[hop];

        // Pending pairs compute candidates and enter their scheme's pipeline.
        for idx in 0..n {
            let Phase::Handoff(mut ho) = self.pairs[idx].phase else { continue };
            if ho.stage != HoStage::Pending || ho.wait_until > slot {
                continue;
            }
            let exclude = self.pairs[idx].last_channel;
            let list = self.candidate_list(idx, exclude);
            if list.is_empty() {
                // Transmission stops; re-check next slot.
                continue;
            }
            match strategy {
                SelectionStrategy::Proposed | SelectionStrategy::Bargaining => {
                    let units = if strategy == SelectionStrategy::Bargaining { 2 } else { 1 };
                    let group = self.group.get_or_insert_with(Group::new);
                    group.join(idx as u32, units, list);
                    ho.stage = HoStage::AwaitTurn;
                }
                SelectionStrategy::Random => {
                    let pick = list[self.pairs[idx].rng.random_range(0..list.len())].0;
                    // CSR/CSA happens this slot on the handoff hop channel.
                    ho.stage = if hop_busy {
                        HoStage::Agree { target: pick }
                    } else {
                        HoStage::Resume { target: pick }
                    };
                }
                SelectionStrategy::Greedy => {
                    // Pre-determined pick, no signaling; this slot is the
                    // channel switch.
                    let mine: std::collections::BTreeSet<u16> =
                        list.iter().map(|&(c, _)| c).collect();
                    let pick = self.greedy_rank.iter().copied().find(|c| mine.contains(c));
                    if let Some(target) = pick {
                        ho.stage = HoStage::Resume { target };
                    }
                }
            }
            self.pairs[idx].phase = Phase::Handoff(ho);
        }

        // Agree retries from previous slots (CSR blocked by a busy hop
        // channel retries until it goes through).
        for idx in 0..n {
            let Phase::Handoff(mut ho) = self.pairs[idx].phase else { continue };
            if let HoStage::Agree { target } = ho.stage {
                if !hop_busy {
                    ho.stage = HoStage::Resume { target };
                    self.pairs[idx].phase = Phase::Handoff(ho);
                }
            }
        }

        // Broadcast round: W channel-availability messages per slot, in the
        // per-slot pseudo-random order over the members still waiting.
        let mut finished: Option<Group> = None;
        if let Some(group) = self.group.as_mut() {
            if !hop_busy && !group.queue.is_empty() {
                let waiting: Vec<u32> = group.queue.iter().copied().collect();
                let order = generate_selection_sequence(
                    slot_seed(cfg.seed ^ self.replication, slot),
                    &waiting,
                );
                // Stable pass: pull up to W units, respecting the slot order.
                let mut budget = cfg.mini_slots;
                for su in order {
                    while budget > 0 {
                        if let Some(pos) = group.queue.iter().position(|&q| q == su) {
                            group.queue.remove(pos);
                            budget -= 1;
                            let left = group.units_left.get_mut(&su).expect("member");
                            *left -= 1;
                            if *left == 0 {
                                group.roster.push(su);
                            }
                        } else {
                            break;
                        }
                    }
                    if budget == 0 {
                        break;
                    }
                }
            }
            if group.queue.is_empty() && !group.roster.is_empty() {
                finished = self.group.take();
            }
        }

        if let Some(group) = finished {
            // Step 3: everyone computes the same assignment from the
            // replicated context; CSR/CSA goes out next slot.
            let ctx = SelectionContext {
                participants: group.roster.clone(),
                candidate_lists: group.lists.clone(),
                sequence_seed: 0,
                mini_slots: cfg.mini_slots,
            };
            let assigned = assignment(&ctx);
            for su in group.roster {
                let idx = su as usize;
                let Phase::Handoff(mut ho) = self.pairs[idx].phase else { continue };
                match assigned.targets[&su] {
                    Some(target) => ho.stage = HoStage::Agree { target },
                    None => {
                        ho.stage = HoStage::Pending;
                        ho.wait_until = slot + 1;
                    }
                }
                self.pairs[idx].phase = Phase::Handoff(ho);
            }
        }

        // Members that just broadcast wait for the round to close.
        for idx in 0..n {
            let Phase::Handoff(mut ho) = self.pairs[idx].phase else { continue };
            if ho.stage == HoStage::AwaitTurn {
                let done = self
                    .group
                    .as_ref()
                    .is_none_or(|g| g.units_left.get(&(idx as u32)).is_none_or(|&u| u == 0));
                if done {
                    ho.stage = HoStage::AwaitGroup;
                    self.pairs[idx].phase = Phase::Handoff(ho);
                }
            }
        }
    }

    fn transmit_step(&mut self, idx: usize, slot: u64, held_now: &[u32], measure: bool) {
        let cfg = &self.r.cfg;
        let Phase::Transmitting { channel, frame_slot, mut doom } = self.pairs[idx].phase else {
            self.pairs[idx].pu_overlap_prev = false;
            return;
        };
        let ch = usize::from(channel) - 1;
        let c = cfg.slots_per_frame;

        // Actual overlap bookkeeping.
        let pu_overlap = self.pu_busy[ch];
        if pu_overlap {
            if measure {
                self.su_pu_overlap_slots += 1;
            }
            if self.r.cfg.pu_retransmission {
                self.pu_retx[ch] = true;
            }
            if measure && !self.pairs[idx].pu_overlap_prev {
                self.su_pu_events += 1;
                self.pairs[idx].su_pu_events += 1;
            }
        }
        let su_overlap = held_now[ch] > 1;
        if doom.is_none() {
            if pu_overlap {
                doom = Some(Doom { slots: 0, su_su: false });
            } else if su_overlap {
                if measure {
                    self.su_su_events += 1;
                }
                doom = Some(Doom { slots: 0, su_su: true });
            }
        }
        if let Some(d) = doom.as_mut() {
            d.slots += 1;
        }
        self.pairs[idx].pu_overlap_prev = pu_overlap;
        self.pairs[idx].slot_stamp =
            Some((if doom.is_some() { 4 } else { 3 }, channel));

        let at_frame_end = frame_slot == c;
        let mode = cfg.handoff_mode;

        // Reactive detection: after Ts collided slots, or at the frame
        // boundary, the frame is abandoned and the pair vacates.
        if mode == HandoffMode::Reactive {
            if let Some(d) = doom {
                if d.slots >= self.r.ts || at_frame_end {
                    self.vacate(idx, channel, slot, HandoffCause::Reactive);
                    return;
                }
            }
        }

        if !at_frame_end {
            self.pairs[idx].phase =
                Phase::Transmitting { channel, frame_slot: frame_slot + 1, doom };
            return;
        }

        // Frame boundary.
        if let Some(_d) = doom {
            // The frame is wasted and must be retransmitted. The proactive
            // protocol re-evaluates the switch policy with the scanning
            // radio's current view of the channel.
            debug_assert_eq!(mode, HandoffMode::Proactive);
            if self.switch_policy_fires(idx, ch, held_now) {
                self.vacate(idx, channel, slot, HandoffCause::Proactive);
            } else {
                self.pairs[idx].phase =
                    Phase::Transmitting { channel, frame_slot: 1, doom: None };
            }
            return;
        }

        // Clean frame.
        if measure {
            self.pairs[idx].completed_frames += 1;
        }
        let svc = self.pairs[idx].service.as_mut().expect("transmitting implies service");
        svc.frames_done += 1;
        if svc.frames_done == cfg.frames_per_packet {
            // Packet complete.
            let arrival = svc.arrival_slot;
            if measure {
                self.pairs[idx].completed_packets += 1;
                self.pairs[idx].service_slots_sum += slot + 1 - arrival;
            }
            self.pairs[idx].service = None;
            self.pairs[idx].phase = Phase::Hopping;
            self.pairs[idx].last_channel = Some(channel);
            self.held[ch] -= 1;
            return;
        }
        if mode == HandoffMode::Proactive && self.switch_policy_fires(idx, ch, held_now) {
            self.vacate(idx, channel, slot, HandoffCause::Proactive);
        } else {
            self.pairs[idx].phase = Phase::Transmitting { channel, frame_slot: 1, doom: None };
        }
    }

    /// The switch policy at a frame boundary: predicted idle probability of
    /// the current channel over the upcoming frame horizon, gated by the
    /// scanning radio's sensed state, strictly below tau_low.
    fn switch_policy_fires(&mut self, idx: usize, ch: usize, held_now: &[u32]) -> bool {
        let th = self.r.thresholds();
        let actual_busy = self.pu_busy[ch] || held_now[ch] > 1;
        let chi = self.r.cfg.sensing_error_chi;
        let mut rng = self.pairs[idx].rng.clone();
        let busy = if chi > 0.0 && rng.random::<f64>() < chi { !actual_busy } else { actual_busy };
        self.pairs[idx].rng = rng;
        let forecast = if busy { 0.0 } else { self.statics[ch].idle_eta };
        forecast < th.tau_low
    }

    fn is_live_sensing(mode: HandoffMode) -> bool {
        mode == HandoffMode::Proactive
    }

    /// Length of a retransmitted PU packet.
    fn pu_fresh_len(&mut self, ch: usize) -> u32 {
        match self.r.cfg.pu_packet {
            crate::model::PuPacketLength::Fixed(l) => l.max(1),
            crate::model::PuPacketLength::Geometric { mean } => {
                let v = (1.0 / mean.max(1.0)).clamp(f64::MIN_POSITIVE, 1.0);
                if v >= 1.0 {
                    1
                } else {
                    let u: f64 = self.chan_rngs[ch].random();
                    1 + ((1.0 - u).ln() / (1.0 - v).ln()).floor().max(0.0) as u32
                }
            }
        }
    }

    fn vacate(&mut self, idx: usize, channel: u16, slot: u64, cause: HandoffCause) {
        let ch = usize::from(channel) - 1;
        self.held[ch] -= 1;
        self.pairs[idx].last_channel = Some(channel);
        self.pairs[idx].pu_overlap_prev = false;
        self.pairs[idx].phase = Phase::Handoff(Handoff {
            started: slot + 1,
            wait_until: slot + 1,
            cause,
            missed: false,
            stage: HoStage::Pending,
        });
    }

    fn finish(self) -> MetricsReport {
        let cfg = &self.r.cfg;
        let measured = cfg.duration_slots - self.r.warmup_slots;
        let beta = cfg.slot_seconds;
        let seconds = measured as f64 * beta;
        let n = cfg.num_su_pairs;

        let warmup = self.r.warmup_slots;
        let counted: Vec<&HandoffRecord> =
            self.records.iter().filter(|r| r.start_slot >= warmup).collect();
        let mut delays: Vec<f64> = counted.iter().map(|r| r.delay_slots() as f64).collect();
        delays.sort_by(f64::total_cmp);
        let mean_delay = (!delays.is_empty())
            .then(|| delays.iter().sum::<f64>() / delays.len() as f64);
        let handoff = HandoffStats {
            count: counted.len() as u64,
            proactive: counted.iter().filter(|r| r.cause == HandoffCause::Proactive).count() as u64,
            reactive: counted.iter().filter(|r| r.cause == HandoffCause::Reactive).count() as u64,
            prediction_miss: counted
                .iter()
                .filter(|r| r.cause == HandoffCause::PredictionMiss)
                .count() as u64,
            mean_delay_slots: mean_delay,
            p50_delay_slots: percentile(&delays, 0.5),
            p95_delay_slots: percentile(&delays, 0.95),
            mean_delay_seconds: mean_delay.map(|d| d * beta),
        };

        let per_su: Vec<PerSuMetrics> = self
            .pairs
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let my_delays: Vec<f64> = counted
                    .iter()
                    .filter(|r| r.pair == i as u32)
                    .map(|r| r.delay_slots() as f64)
                    .collect();
                PerSuMetrics {
                    pair: i as u32,
                    arrival_prob_x: p.x,
                    completed_packets: p.completed_packets,
                    completed_frames: p.completed_frames,
                    throughput_pps: p.completed_packets as f64 / seconds,
                    normalized_throughput: p.buckets.transmitting as f64 / measured as f64,
                    su_pu_collisions: p.su_pu_events,
                    handoff_count: my_delays.len() as u64,
                    mean_handoff_delay_slots: (!my_delays.is_empty())
                        .then(|| my_delays.iter().sum::<f64>() / my_delays.len() as f64),
                    buckets: p.buckets,
                    trace_digest: p.trace_digest,
                }
            })
            .collect();

        let completed_packets: u64 = per_su.iter().map(|p| p.completed_packets).sum();
        let completed_frames: u64 = per_su.iter().map(|p| p.completed_frames).sum();
        let total_buckets: SlotBuckets = per_su.iter().fold(SlotBuckets::default(), |mut a, p| {
            a.transmitting += p.buckets.transmitting;
            a.collided += p.buckets.collided;
            a.idle += p.buckets.idle;
            a.backlogged += p.buckets.backlogged;
            a.handoff_overhead += p.buckets.handoff_overhead;
            a
        });
        let denom = (measured * n as u64) as f64;
        let service_sum: u64 = self.pairs.iter().map(|p| p.service_slots_sum).sum();

        MetricsReport {
            seed: cfg.seed,
            replication: self.replication,
            duration_slots: cfg.duration_slots,
            warmup_slots: warmup,
            measured_slots: measured,
            su_throughput_pps: completed_packets as f64 / seconds,
            su_throughput_normalized: per_su
                .iter()
                .map(|p| p.normalized_throughput)
                .sum::<f64>()
                / n as f64,
            completed_packets,
            completed_frames,
            collision_rate: (completed_packets > 0)
                .then(|| self.su_pu_events as f64 / completed_packets as f64),
            collisions_per_second: self.su_pu_events as f64 / seconds,
            su_pu_collision_events: self.su_pu_events,
            su_pu_overlap_slots: self.su_pu_overlap_slots,
            su_su_collision_count: self.su_su_events,
            type1_collision_count: self.type1_collisions,
            handoff,
            mean_service_time_seconds: (completed_packets > 0)
                .then(|| service_sum as f64 / completed_packets as f64 * beta),
            slot_fractions: SlotFractions {
                transmitting: total_buckets.transmitting as f64 / denom,
                collided: total_buckets.collided as f64 / denom,
                idle: total_buckets.idle as f64 / denom,
                backlogged: total_buckets.backlogged as f64 / denom,
                handoff_overhead: total_buckets.handoff_overhead as f64 / denom,
            },
            per_su,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{PuRateProfile, PuRateSpec, Thresholds};

    fn small_cfg() -> ScenarioConfig {
        ScenarioConfig {
            num_su_pairs: 4,
            num_channels: 5,
            duration_slots: 20_000,
            replications: 2,
            su_traffic: SuRateSpec::ArrivalProb(0.02),
            pu_rate: PuRateSpec::ArrivalProb(0.01),
            pu_rate_profile: PuRateProfile::LinearSpread(0.5),
            seed: 7,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn identical_seed_and_config_reproduce_the_report() {
        let resolved = small_cfg().resolve().unwrap();
        let a = run_scenario(&resolved, 0);
        let b = run_scenario(&resolved, 0);
        assert_eq!(a, b);
        let c = run_scenario(&resolved, 1);
        assert_ne!(a.per_su[0].trace_digest, c.per_su[0].trace_digest);
    }

    #[test]
    fn slot_accounting_is_exactly_conserved() {
        let resolved = small_cfg().resolve().unwrap();
        let report = run_scenario(&resolved, 0);
        for su in &report.per_su {
            assert_eq!(
                su.buckets.total(),
                report.measured_slots,
                "pair {} buckets {:?}",
                su.pair,
                su.buckets
            );
        }
        let f = report.slot_fractions;
        let sum = f.transmitting + f.collided + f.idle + f.backlogged + f.handoff_overhead;
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn silent_pair_does_not_perturb_the_others() {
        let base = small_cfg();
        let with_extra = ScenarioConfig {
            num_su_pairs: 5,
            su_traffic: SuRateSpec::PerPairPps(vec![10.0, 10.0, 10.0, 10.0, 0.0]),
            ..base.clone()
        };
        let base = ScenarioConfig {
            su_traffic: SuRateSpec::PerPairPps(vec![10.0, 10.0, 10.0, 10.0]),
            ..base
        };
        let a = run_scenario(&base.resolve().unwrap(), 0);
        let b = run_scenario(&with_extra.resolve().unwrap(), 0);
        for i in 0..4 {
            assert_eq!(
                a.per_su[i].trace_digest, b.per_su[i].trace_digest,
                "pair {i} trace changed when a silent pair was added"
            );
        }
        assert_eq!(b.per_su[4].completed_packets, 0);
    }

    #[test]
    fn proposed_selection_reports_zero_type2_collisions() {
        let cfg = ScenarioConfig {
            num_su_pairs: 8,
            num_channels: 6,
            duration_slots: 40_000,
            su_traffic: SuRateSpec::ArrivalProb(1.0),
            pu_rate: PuRateSpec::ArrivalProb(0.02),
            selection: SelectionStrategy::Proposed,
            seed: 11,
            ..ScenarioConfig::default()
        };
        let report = run_scenario(&cfg.resolve().unwrap(), 0);
        assert_eq!(report.su_su_collision_count, 0);
        assert!(report.completed_packets > 0, "scenario must make progress");
        assert!(report.handoff.count > 0, "scenario must exercise handoffs");
    }

    #[test]
    fn handoff_delays_are_at_least_one_slot() {
        let cfg = ScenarioConfig {
            num_su_pairs: 6,
            duration_slots: 40_000,
            su_traffic: SuRateSpec::ArrivalProb(1.0),
            pu_rate: PuRateSpec::ArrivalProb(0.03),
            seed: 3,
            ..ScenarioConfig::default()
        };
        let resolved = cfg.resolve().unwrap();
        let sim = Simulation::new(&resolved, 0);
        let report = sim.run();
        assert!(report.handoff.count > 0);
        assert!(report.handoff.p50_delay_slots.unwrap() >= 1.0);
    }

    #[test]
    fn reactive_mode_records_reactive_causes() {
        let cfg = ScenarioConfig {
            handoff_mode: HandoffMode::Reactive,
            num_su_pairs: 4,
            duration_slots: 60_000,
            su_traffic: SuRateSpec::ArrivalProb(1.0),
            pu_rate: PuRateSpec::ArrivalProb(0.03),
            selection: SelectionStrategy::Random,
            seed: 5,
            ..ScenarioConfig::default()
        };
        let report = run_scenario(&cfg.resolve().unwrap(), 0);
        assert!(report.handoff.reactive > 0);
        assert_eq!(report.handoff.proactive, 0);
    }

    /// Deterministic single-pair timeline at p = 0, x = 1: packet arrives
    /// at slot 0, the RTS decision targets the next hop channel, RTS/CTS
    /// occupy one slot, data starts the slot after, and the switch policy
    /// never fires, so the service cycle is exactly 2 + h*c slots.
    #[test]
    fn single_pair_timeline_without_pu_traffic() {
        let cfg = ScenarioConfig {
            num_su_pairs: 1,
            num_channels: 3,
            duration_slots: 50_000,
            replications: 1,
            su_traffic: SuRateSpec::ArrivalProb(1.0),
            pu_rate: PuRateSpec::ArrivalProb(0.0),
            pu_rate_profile: PuRateProfile::Uniform,
            seed: 1,
            ..ScenarioConfig::default()
        };
        let report = run_scenario(&cfg.resolve().unwrap(), 0);
        assert_eq!(report.handoff.count, 0, "no PU, no handoffs");
        assert_eq!(report.su_pu_collision_events, 0);
        assert_eq!(report.su_su_collision_count, 0);
        // 40 data slots out of every 42-slot service cycle.
        let expect = 40.0 / 42.0;
        assert!(
            (report.su_throughput_normalized - expect).abs() < 0.01,
            "normalized throughput {} vs {expect}",
            report.su_throughput_normalized
        );
        let pps = 1.0 / (42.0 * 0.002);
        assert!(
            (report.su_throughput_pps - pps).abs() < 0.15,
            "throughput {} vs {pps}",
            report.su_throughput_pps
        );
    }

    /// Earlier reactive detection (smaller Ts) abandons doomed frames
    /// sooner and never lowers throughput.
    #[test]
    fn reactive_throughput_improves_with_earlier_detection() {
        let run_ts = |ts: u32| {
            let cfg = ScenarioConfig {
                handoff_mode: HandoffMode::Reactive,
                selection: SelectionStrategy::Random,
                num_su_pairs: 4,
                duration_slots: 150_000,
                replications: 3,
                su_traffic: SuRateSpec::ArrivalProb(1.0),
                pu_rate: PuRateSpec::ArrivalProb(0.02),
                sensing_delay_slots: Some(ts),
                seed: 77,
                ..ScenarioConfig::default()
            };
            let (_, summary) = run_replications(&cfg).unwrap();
            summary.throughput_pps.mean
        };
        let fast = run_ts(1);
        let slow = run_ts(10);
        assert!(
            fast >= slow * 0.98,
            "Ts = 1 throughput {fast:.2} fell below Ts = c throughput {slow:.2}"
        );
    }

    /// With all thresholds at 1 the policies only admit channels that are
    /// certainly idle; under PU traffic nothing qualifies, so the pair
    /// never transmits and never collides (the strict upper bound of the
    /// switch-policy contract).
    #[test]
    fn strict_thresholds_never_collide() {
        let cfg = ScenarioConfig {
            num_su_pairs: 3,
            duration_slots: 30_000,
            replications: 1,
            su_traffic: SuRateSpec::ArrivalProb(1.0),
            pu_rate: PuRateSpec::ArrivalProb(0.02),
            thresholds: Thresholds { tau_low: 1.0, tau_high: 1.0, theta: 1.0 },
            seed: 2,
            ..ScenarioConfig::default()
        };
        let report = run_scenario(&cfg.resolve().unwrap(), 0);
        assert_eq!(report.su_pu_collision_events, 0);
        assert_eq!(report.completed_packets, 0);
        // And with no PU traffic at the same thresholds, everything flows.
        let cfg = ScenarioConfig {
            pu_rate: PuRateSpec::ArrivalProb(0.0),
            ..cfg
        };
        let report = run_scenario(&cfg.resolve().unwrap(), 0);
        assert_eq!(report.su_pu_collision_events, 0);
        assert!(report.completed_packets > 0);
    }

    /// Sensing errors only ever hurt: throughput is non-increasing in chi
    /// over the {0, 0.5, 1} sweep.
    #[test]
    fn throughput_is_non_increasing_in_sensing_error() {
        let cfg = ScenarioConfig {
            num_su_pairs: 6,
            duration_slots: 120_000,
            replications: 3,
            su_traffic: SuRateSpec::ArrivalProb(1.0),
            pu_rate: PuRateSpec::ArrivalProb(0.02),
            seed: 99,
            ..ScenarioConfig::default()
        };
        let table = run_sweep(&cfg, "chi", &[0.0, 0.5, 1.0]).unwrap();
        let mean = |value: f64| {
            let rows: Vec<f64> = table
                .rows
                .iter()
                .filter(|r| r.value == value)
                .map(|r| r.report.su_throughput_pps)
                .collect();
            rows.iter().sum::<f64>() / rows.len() as f64
        };
        let (t0, t5, t1) = (mean(0.0), mean(0.5), mean(1.0));
        assert!(t0 >= t5 && t5 >= t1, "throughput not monotone in chi: {t0:.2}, {t5:.2}, {t1:.2}");
        assert!(t1 < 0.5 * t0, "fully inverted sensing should be crippling");
    }

    #[test]
    fn sweep_produces_rows_per_value_and_replication() {
        let mut cfg = small_cfg();
        cfg.duration_slots = 5_000;
        cfg.replications = 3;
        let table = run_sweep(&cfg, "chi", &[0.0, 0.5]).unwrap();
        assert_eq!(table.rows.len(), 6);
        assert!(run_sweep(&cfg, "bogus", &[1.0]).is_err());
        let empty = run_sweep(&cfg, "chi", &[]).unwrap();
        assert!(empty.rows.is_empty());
    }
}
