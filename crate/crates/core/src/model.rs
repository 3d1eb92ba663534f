//! Slot clock, frame layout, PU channel traffic, and SU packet arrivals.
//!
//! Time is slotted: a SU packet is `h` frames, a frame is `c` slots of
//! length `beta` seconds. Each licensed channel is an ON/OFF process: OFF
//! periods are geometric with per-slot arrival probability `p` (zero-length
//! gaps allowed, i.e. back-to-back PU packets via the one-packet buffer),
//! ON periods are one PU packet of fixed or geometric length.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 1-based channel identifier in `[1, M]`.
pub type ChannelId = u16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    /// An SU traffic source with `x = 0` never generates a packet; asking it
    /// for the next gap is a misconfiguration.
    #[error("SU arrival probability x = 0 generates no traffic")]
    ZeroArrivalRate,
}

/// Advancing slot counter plus the slot length in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotClock {
    pub slot_index: u64,
    pub slot_length_beta: f64,
}

impl SlotClock {
    pub fn new(slot_length_beta: f64) -> Self {
        assert!(slot_length_beta > 0.0, "slot length must be positive");
        Self { slot_index: 0, slot_length_beta }
    }

    /// Advances to the next slot.
    pub fn tick(&mut self) {
        self.slot_index += 1;
    }

    /// Wall-clock seconds covered by `slots`.
    pub fn seconds(&self, slots: u64) -> f64 {
        slots as f64 * self.slot_length_beta
    }
}

/// Frame layout shared by all SUs: `c` slots per frame, `h` frames per packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub slots_per_frame: u32,
    pub frames_per_packet: u32,
}

impl FrameSpec {
    pub fn new(slots_per_frame: u32, frames_per_packet: u32) -> Self {
        assert!(slots_per_frame >= 1 && frames_per_packet >= 1);
        Self { slots_per_frame, frames_per_packet }
    }

    /// The candidate-channel horizon: one frame plus one slot.
    pub fn eta(&self) -> u32 {
        self.slots_per_frame + 1
    }

    /// Nominal SU packet length in slots.
    pub fn packet_slots(&self) -> u32 {
        self.slots_per_frame * self.frames_per_packet
    }
}

/// PU occupancy of one channel at one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Occupancy {
    Off,
    On { remaining_slots: u32 },
}

/// Per-channel PU state. `pending_pu_packet` marks an ON period that began
/// back-to-back out of the one-packet buffer (a zero-length OFF gap).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelState {
    pub channel_id: ChannelId,
    pub occupancy: Occupancy,
    pub pending_pu_packet: bool,
}

impl ChannelState {
    pub fn idle(channel_id: ChannelId) -> Self {
        Self { channel_id, occupancy: Occupancy::Off, pending_pu_packet: false }
    }

    pub fn is_on(&self) -> bool {
        matches!(self.occupancy, Occupancy::On { .. })
    }
}

/// PU packet length model. The handoff-protocol experiments use fixed
/// lengths; the chain analytics use geometric completion with `v = 1/mean`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PuPacketLength {
    Fixed(u32),
    Geometric { mean: f64 },
}

impl PuPacketLength {
    /// Per-slot completion probability `v` (1/mean for geometric, 1/L fixed).
    pub fn completion_prob(&self) -> f64 {
        match *self {
            PuPacketLength::Fixed(l) => 1.0 / f64::from(l.max(1)),
            PuPacketLength::Geometric { mean } => 1.0 / mean.max(1.0),
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> u32 {
        match *self {
            PuPacketLength::Fixed(l) => l.max(1),
            PuPacketLength::Geometric { mean } => {
                let v = (1.0 / mean.max(1.0)).clamp(f64::MIN_POSITIVE, 1.0);
                if v >= 1.0 {
                    return 1;
                }
                // Inverse CDF of the shifted geometric (support 1, 2, ...).
                let u: f64 = rng.random();
                let g = ((1.0 - u).ln() / (1.0 - v).ln()).floor();
                1 + g.max(0.0).min(u32::MAX as f64 - 2.0) as u32
            }
        }
    }
}

/// Per-channel PU traffic parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PuTrafficParams {
    /// Probability `p` that a PU packet arrives in a slot where the channel
    /// (or its completion boundary) is free.
    pub arrival_prob: f64,
    pub packet_length: PuPacketLength,
}

impl PuTrafficParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.arrival_prob) {
            return Err(format!("PU arrival probability {} outside [0, 1]", self.arrival_prob));
        }
        if let PuPacketLength::Fixed(0) = self.packet_length {
            return Err("PU packet length must be at least 1 slot".into());
        }
        if let PuPacketLength::Geometric { mean } = self.packet_length {
            if mean < 1.0 || mean.is_nan() {
                return Err(format!("geometric PU packet mean {mean} must be >= 1 slot"));
            }
        }
        Ok(())
    }
}

/// One-slot transition of a PU channel.
///
/// An OFF channel turns ON next slot with probability `p`. An ON channel
/// serves out its packet; at the completion boundary a buffered packet (held
/// with probability `p`) starts immediately, which is what makes zero-length
/// OFF gaps possible and gives the OFF pmf `p(1-p)^n`, `n >= 0`.
pub fn advance_pu_channel(
    state: &ChannelState,
    params: &PuTrafficParams,
    rng: &mut impl Rng,
) -> ChannelState {
    let p = params.arrival_prob;
    match state.occupancy {
        Occupancy::Off => {
            if p > 0.0 && rng.random::<f64>() < p {
                ChannelState {
                    channel_id: state.channel_id,
                    occupancy: Occupancy::On { remaining_slots: params.packet_length.sample(rng) },
                    pending_pu_packet: false,
                }
            } else {
                ChannelState::idle(state.channel_id)
            }
        }
        Occupancy::On { remaining_slots } => {
            if remaining_slots > 1 {
                ChannelState {
                    channel_id: state.channel_id,
                    occupancy: Occupancy::On { remaining_slots: remaining_slots - 1 },
                    pending_pu_packet: false,
                }
            } else if p > 0.0 && rng.random::<f64>() < p {
                // Buffered packet starts the moment the channel frees.
                ChannelState {
                    channel_id: state.channel_id,
                    occupancy: Occupancy::On { remaining_slots: params.packet_length.sample(rng) },
                    pending_pu_packet: true,
                }
            } else {
                ChannelState::idle(state.channel_id)
            }
        }
    }
}

/// SU packet arrival parameters: biased geometric inter-arrival with
/// per-slot probability `x` and minimum gap `a` slots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuTrafficParams {
    pub normalized_arrival: f64,
    pub min_gap: u32,
}

impl SuTrafficParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.normalized_arrival) {
            return Err(format!("SU arrival probability {} outside [0, 1]", self.normalized_arrival));
        }
        Ok(())
    }
}

/// Draws the next SU inter-arrival gap: pmf `x(1-x)^(n-a)` for `n >= a`.
pub fn next_su_arrival_gap(
    params: &SuTrafficParams,
    rng: &mut impl Rng,
) -> Result<u64, ModelError> {
    let x = params.normalized_arrival;
    if x <= 0.0 {
        return Err(ModelError::ZeroArrivalRate);
    }
    let extra = if x >= 1.0 {
        0
    } else {
        let u: f64 = rng.random();
        ((1.0 - u).ln() / (1.0 - x).ln()).floor().max(0.0) as u64
    };
    Ok(u64::from(params.min_gap) + extra)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn slot_clock_and_frame_spec_arithmetic() {
        let mut clock = SlotClock::new(0.002);
        for expect in 1..=5u64 {
            clock.tick();
            assert_eq!(clock.slot_index, expect);
        }
        assert!((clock.seconds(500) - 1.0).abs() < 1e-12);
        let frames = FrameSpec::new(10, 4);
        assert_eq!(frames.eta(), 11);
        assert_eq!(frames.packet_slots(), 40);
    }

    #[test]
    fn off_channel_stays_off_with_zero_arrival_rate() {
        let params =
            PuTrafficParams { arrival_prob: 0.0, packet_length: PuPacketLength::Fixed(4) };
        let mut rng = stream_rng(1, "test", 0, 0);
        let mut state = ChannelState::idle(1);
        for _ in 0..1000 {
            state = advance_pu_channel(&state, &params, &mut rng);
            assert_eq!(state.occupancy, Occupancy::Off);
        }
    }

    #[test]
    fn fixed_service_completes_deterministically() {
        let mut rng = stream_rng(2, "test", 0, 0);
        let last_on = ChannelState {
            channel_id: 1,
            occupancy: Occupancy::On { remaining_slots: 1 },
            pending_pu_packet: false,
        };
        // p = 0: the channel frees.
        let params = PuTrafficParams { arrival_prob: 0.0, packet_length: PuPacketLength::Fixed(6) };
        assert_eq!(advance_pu_channel(&last_on, &params, &mut rng).occupancy, Occupancy::Off);
        // p = 1: a buffered packet always starts back-to-back.
        let params = PuTrafficParams { arrival_prob: 1.0, packet_length: PuPacketLength::Fixed(6) };
        let next = advance_pu_channel(&last_on, &params, &mut rng);
        assert_eq!(next.occupancy, Occupancy::On { remaining_slots: 6 });
        assert!(next.pending_pu_packet);
    }

    #[test]
    fn every_fixed_on_burst_has_the_emitted_length() {
        let l = 5;
        let params =
            PuTrafficParams { arrival_prob: 0.3, packet_length: PuPacketLength::Fixed(l) };
        let mut rng = stream_rng(3, "test", 0, 0);
        let mut state = ChannelState::idle(1);
        let mut on_run = 0u32;
        for _ in 0..200_000 {
            let next = advance_pu_channel(&state, &params, &mut rng);
            match (state.is_on(), next.is_on()) {
                (false, true) => {
                    assert_eq!(next.occupancy, Occupancy::On { remaining_slots: l });
                    on_run = 1;
                }
                (true, true) => {
                    if next.pending_pu_packet {
                        assert_eq!(on_run % l, 0, "packet boundary off the L grid");
                        assert_eq!(next.occupancy, Occupancy::On { remaining_slots: l });
                    }
                    on_run += 1;
                }
                (true, false) => {
                    assert_eq!(on_run % l, 0, "ON burst of {on_run} slots is not a multiple of {l}");
                    on_run = 0;
                }
                (false, false) => {}
            }
            state = next;
        }
    }

    /// Monte Carlo check of the geometric OFF pmf mean (1-p)/p, counting
    /// zero-length gaps via the back-to-back marker.
    #[test]
    fn empirical_mean_off_duration_matches_geometric_mean() {
        let p = 0.1;
        let params = PuTrafficParams { arrival_prob: p, packet_length: PuPacketLength::Fixed(5) };
        let mut rng = stream_rng(4, "test", 0, 0);
        let mut state = ChannelState::idle(1);
        let mut gaps: Vec<u64> = Vec::new();
        let mut off_run: Option<u64> = None;
        for _ in 0..1_000_000u64 {
            let next = advance_pu_channel(&state, &params, &mut rng);
            match (state.is_on(), next.is_on()) {
                (true, true) if next.pending_pu_packet => gaps.push(0),
                (true, false) => off_run = Some(1),
                (false, false) => {
                    if let Some(r) = off_run.as_mut() {
                        *r += 1;
                    }
                }
                (false, true) => {
                    if let Some(r) = off_run.take() {
                        gaps.push(r);
                    }
                }
                _ => {}
            }
            state = next;
        }
        let mean = gaps.iter().sum::<u64>() as f64 / gaps.len() as f64;
        let expected = (1.0 - p) / p;
        assert!(
            (mean - expected).abs() / expected < 0.02,
            "mean OFF {mean:.3} vs expected {expected:.3}"
        );
    }

    #[test]
    fn su_gap_is_degenerate_at_saturation() {
        let params = SuTrafficParams { normalized_arrival: 1.0, min_gap: 5 };
        let mut rng = stream_rng(5, "test", 0, 0);
        for _ in 0..100 {
            assert_eq!(next_su_arrival_gap(&params, &mut rng).unwrap(), 5);
        }
    }

    #[test]
    fn su_gap_respects_support_and_mean() {
        let params = SuTrafficParams { normalized_arrival: 0.25, min_gap: 10 };
        let mut rng = stream_rng(6, "test", 0, 0);
        let n = 1_000_000u64;
        let mut sum = 0u64;
        for _ in 0..n {
            let gap = next_su_arrival_gap(&params, &mut rng).unwrap();
            assert!(gap >= 10);
            sum += gap;
        }
        let mean = sum as f64 / n as f64;
        let expected = 10.0 + (1.0 - 0.25) / 0.25;
        assert!(
            (mean - expected).abs() / expected < 0.02,
            "mean gap {mean:.4} vs expected {expected:.4}"
        );
    }

    #[test]
    fn zero_rate_su_source_is_rejected() {
        let params = SuTrafficParams { normalized_arrival: 0.0, min_gap: 3 };
        let mut rng = stream_rng(7, "test", 0, 0);
        assert_eq!(next_su_arrival_gap(&params, &mut rng), Err(ModelError::ZeroArrivalRate));
    }

    #[test]
    fn identical_seeds_replay_identical_traces() {
        let params =
            PuTrafficParams { arrival_prob: 0.2, packet_length: PuPacketLength::Geometric { mean: 8.0 } };
        let mut a = stream_rng(9, "pu-channel", 2, 1);
        let mut b = stream_rng(9, "pu-channel", 2, 1);
        let mut sa = ChannelState::idle(3);
        let mut sb = ChannelState::idle(3);
        for _ in 0..10_000 {
            sa = advance_pu_channel(&sa, &params, &mut a);
            sb = advance_pu_channel(&sb, &params, &mut b);
            assert_eq!(sa, sb);
        }
    }
}
