//! Scenario configuration: ingestion, validation with field-level
//! diagnostics, and conversion of packet/second rates to per-slot
//! probabilities (`x = lambda * beta`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{FrameSpec, PuPacketLength, PuTrafficParams, SuTrafficParams};
use crate::prediction::PredictionThresholds;
use crate::rng;
use crate::selection::SelectionStrategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandoffMode {
    Proactive,
    Reactive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordinationKind {
    Single,
    Multiple,
}

/// SU traffic specification; all rate forms are converted to the per-slot
/// arrival probability `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuRateSpec {
    /// One rate in packets/second for every pair.
    RatePps(f64),
    /// Per-slot probability, bypassing the rate conversion.
    ArrivalProb(f64),
    /// Heterogeneous rates drawn per pair, uniformly from `[lo, hi]`
    /// packets/second (seed-stable, independent of the replication index).
    RangePps { lo: f64, hi: f64 },
    /// Explicit per-pair rates in packets/second.
    PerPairPps(Vec<f64>),
}

/// PU traffic intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PuRateSpec {
    RatePps(f64),
    ArrivalProb(f64),
}

/// Distribution of the PU load across channels. `LinearSpread(d)` scales
/// channel `i` by `1 + d * (2i/(M-1) - 1)`, keeping the mean load equal to
/// the configured rate while making some channels measurably quieter than
/// others (the structure the prediction policies exploit).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PuRateProfile {
    Uniform,
    LinearSpread(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub tau_low: f64,
    pub tau_high: f64,
    pub theta: f64,
}

/// Full experiment description. Serialized as JSON for `--config` files and
/// into the run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub num_su_pairs: usize,
    pub num_channels: u16,
    /// Slot length beta in seconds.
    pub slot_seconds: f64,
    /// Slots per frame (c).
    pub slots_per_frame: u32,
    /// Frames per SU packet (h).
    pub frames_per_packet: u32,
    /// Mini slots per slot (W) for the broadcast step.
    pub mini_slots: u32,
    pub thresholds: Thresholds,
    pub su_traffic: SuRateSpec,
    pub pu_rate: PuRateSpec,
    pub pu_rate_profile: PuRateProfile,
    pub pu_packet: PuPacketLength,
    pub handoff_mode: HandoffMode,
    pub coordination: CoordinationKind,
    pub selection: SelectionStrategy,
    /// Probability that a sensing/prediction verdict is flipped.
    pub sensing_error_chi: f64,
    /// Sensing delay Ts in slots; defaults to a full frame (detection at
    /// the frame boundary).
    pub sensing_delay_slots: Option<u32>,
    /// A PU packet hit by SU interference is retransmitted by the PU once
    /// the current transmission ends (the one-packet buffer holds it until
    /// it goes through cleanly).
    pub pu_retransmission: bool,
    pub seed: u64,
    pub duration_slots: u64,
    pub replications: u32,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            num_su_pairs: 10,
            num_channels: 10,
            slot_seconds: 0.002,
            slots_per_frame: 10,
            frames_per_packet: 4,
            mini_slots: 4,
            thresholds: Thresholds { tau_low: 0.7, tau_high: 0.7, theta: 0.6 },
            su_traffic: SuRateSpec::RatePps(500.0),
            pu_rate: PuRateSpec::RatePps(10.0),
            pu_rate_profile: PuRateProfile::Uniform,
            pu_packet: PuPacketLength::Fixed(25),
            handoff_mode: HandoffMode::Proactive,
            coordination: CoordinationKind::Single,
            selection: SelectionStrategy::Proposed,
            sensing_error_chi: 0.0,
            sensing_delay_slots: None,
            pu_retransmission: true,
            seed: 42,
            duration_slots: 200_000,
            replications: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldIssue {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration:\n{}", issues_to_string(.0))]
    Invalid(Vec<FieldIssue>),
    #[error("cannot parse configuration: {0}")]
    Parse(#[from] serde_json::Error),
}

fn issues_to_string(issues: &[FieldIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("  - {}: {}", i.field, i.message))
        .collect::<Vec<_>>()
        .join("\n")
}

/// A validated scenario with all rates resolved to per-slot probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedScenario {
    pub cfg: ScenarioConfig,
    /// Per-pair SU arrival probability x.
    pub su_x: Vec<f64>,
    /// Per-channel PU arrival probability p.
    pub pu_p: Vec<f64>,
    /// Minimum SU inter-arrival gap: the nominal packet length c*h.
    pub min_gap: u32,
    pub ts: u32,
    pub eta: u32,
    pub warmup_slots: u64,
    /// Non-fatal conversion notes (e.g. rate clamped at saturation).
    pub warnings: Vec<String>,
}

impl ResolvedScenario {
    pub fn frame_spec(&self) -> FrameSpec {
        FrameSpec::new(self.cfg.slots_per_frame, self.cfg.frames_per_packet)
    }

    pub fn thresholds(&self) -> PredictionThresholds {
        PredictionThresholds {
            tau_low: self.cfg.thresholds.tau_low,
            tau_high: self.cfg.thresholds.tau_high,
            theta: self.cfg.thresholds.theta,
            eta: self.eta,
        }
    }

    pub fn su_params(&self, pair: usize) -> SuTrafficParams {
        SuTrafficParams { normalized_arrival: self.su_x[pair], min_gap: self.min_gap }
    }

    pub fn pu_params(&self, channel: usize) -> PuTrafficParams {
        PuTrafficParams { arrival_prob: self.pu_p[channel], packet_length: self.cfg.pu_packet }
    }

    pub fn pu_mean_packet_slots(&self) -> f64 {
        match self.cfg.pu_packet {
            PuPacketLength::Fixed(l) => f64::from(l),
            PuPacketLength::Geometric { mean } => mean,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Validates every field and resolves rates; collects all problems
    /// rather than stopping at the first.
    pub fn resolve(&self) -> Result<ResolvedScenario, ConfigError> {
        let mut issues = Vec::new();
        let mut warnings = Vec::new();
        let mut issue = |field: &str, message: String| {
            issues.push(FieldIssue { field: field.into(), message });
        };

        if self.num_su_pairs == 0 {
            issue("num_su_pairs", "at least one SU pair is required".into());
        }
        if self.num_channels == 0 {
            issue("num_channels", "at least one channel is required".into());
        }
        if self.slot_seconds <= 0.0 || self.slot_seconds.is_nan() {
            issue("slot_seconds", format!("slot length {} must be positive", self.slot_seconds));
        }
        if self.slots_per_frame == 0 {
            issue("slots_per_frame", "a frame needs at least one slot".into());
        }
        if self.frames_per_packet == 0 {
            issue("frames_per_packet", "a packet needs at least one frame".into());
        }
        if self.mini_slots == 0 {
            issue("mini_slots", "W must be at least 1".into());
        }
        let th = PredictionThresholds {
            tau_low: self.thresholds.tau_low,
            tau_high: self.thresholds.tau_high,
            theta: self.thresholds.theta,
            eta: self.slots_per_frame.max(1) + 1,
        };
        if let Err(msg) = th.validate() {
            issue("thresholds", msg);
        }
        if !(0.0..=1.0).contains(&self.sensing_error_chi) {
            issue("sensing_error_chi", format!("{} outside [0, 1]", self.sensing_error_chi));
        }
        let ts = self.sensing_delay_slots.unwrap_or(self.slots_per_frame.max(1));
        if ts == 0 || ts > self.slots_per_frame.max(1) {
            issue(
                "sensing_delay_slots",
                format!("Ts = {ts} outside [1, c = {}]", self.slots_per_frame),
            );
        }
        if self.duration_slots < 100 {
            issue("duration_slots", format!("{} slots is too short to measure", self.duration_slots));
        }
        if self.replications == 0 {
            issue("replications", "at least one replication is required".into());
        }

        // SU rates.
        let rate_to_x = |label: &str, pps: f64, warnings: &mut Vec<String>| -> f64 {
            let x = pps * self.slot_seconds;
            if x > 1.0 {
                warnings.push(format!(
                    "{label}: rate {pps} pkt/s gives x = {x:.3} > 1; clamped to 1 (saturated source)"
                ));
                1.0
            } else {
                x
            }
        };
        let mut su_x = Vec::new();
        match &self.su_traffic {
            SuRateSpec::RatePps(pps) => {
                if *pps < 0.0 {
                    issue("su_traffic", format!("negative rate {pps}"));
                } else {
                    su_x = vec![rate_to_x("su_traffic", *pps, &mut warnings); self.num_su_pairs];
                }
            }
            SuRateSpec::ArrivalProb(x) => {
                if !(0.0..=1.0).contains(x) {
                    issue("su_traffic", format!("arrival probability {x} outside [0, 1]"));
                } else {
                    su_x = vec![*x; self.num_su_pairs];
                }
            }
            SuRateSpec::RangePps { lo, hi } => {
                if !(0.0 <= *lo && lo <= hi) {
                    issue("su_traffic", format!("bad range [{lo}, {hi}]"));
                } else {
                    su_x = (0..self.num_su_pairs)
                        .map(|i| {
                            let unit = rng::mix64(rng::stream_seed(self.seed, "su-rate", i as u64, 0))
                                as f64
                                / u64::MAX as f64;
                            let pps = lo + (hi - lo) * unit;
                            rate_to_x(&format!("su_traffic[{i}]"), pps, &mut warnings)
                        })
                        .collect();
                }
            }
            SuRateSpec::PerPairPps(rates) => {
                if rates.len() != self.num_su_pairs {
                    issue(
                        "su_traffic",
                        format!("{} rates for {} pairs", rates.len(), self.num_su_pairs),
                    );
                } else {
                    su_x = rates
                        .iter()
                        .enumerate()
                        .map(|(i, &pps)| rate_to_x(&format!("su_traffic[{i}]"), pps, &mut warnings))
                        .collect();
                }
            }
        }

        // PU rates with the per-channel profile.
        let pu_base = match self.pu_rate {
            PuRateSpec::RatePps(pps) => {
                if pps < 0.0 {
                    issue("pu_rate", format!("negative rate {pps}"));
                    0.0
                } else {
                    rate_to_x("pu_rate", pps, &mut warnings)
                }
            }
            PuRateSpec::ArrivalProb(p) => {
                if !(0.0..=1.0).contains(&p) {
                    issue("pu_rate", format!("arrival probability {p} outside [0, 1]"));
                    0.0
                } else {
                    p
                }
            }
        };
        let m = usize::from(self.num_channels.max(1));
        let pu_p: Vec<f64> = match self.pu_rate_profile {
            PuRateProfile::Uniform => vec![pu_base; m],
            PuRateProfile::LinearSpread(d) => {
                if !(0.0..1.0).contains(&d) {
                    issue("pu_rate_profile", format!("spread {d} outside [0, 1)"));
                }
                (0..m)
                    .map(|i| {
                        let tilt = if m == 1 {
                            0.0
                        } else {
                            d * (2.0 * i as f64 / (m as f64 - 1.0) - 1.0)
                        };
                        (pu_base * (1.0 + tilt)).clamp(0.0, 1.0)
                    })
                    .collect()
            }
        };
        if let Err(msg) = (PuTrafficParams { arrival_prob: pu_base, packet_length: self.pu_packet })
            .validate()
        {
            issue("pu_packet", msg);
        }

        if !issues.is_empty() {
            return Err(ConfigError::Invalid(issues));
        }
        let frames = FrameSpec::new(self.slots_per_frame, self.frames_per_packet);
        Ok(ResolvedScenario {
            cfg: self.clone(),
            su_x,
            pu_p,
            min_gap: frames.packet_slots(),
            ts,
            eta: frames.eta(),
            warmup_slots: self.duration_slots / 10,
            warnings,
        })
    }
}
