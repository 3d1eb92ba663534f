//! Per-run metrics, per-SU breakdowns, and replication aggregation.

use serde::{Deserialize, Serialize};

/// How a handoff episode was triggered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandoffCause {
    /// The switch policy fired at a frame boundary.
    Proactive,
    /// An actual collision was detected.
    Reactive,
    /// The previous target failed verification at resume time.
    PredictionMiss,
}

/// One completed handoff episode: from the first slot after vacating the
/// old channel to the first data slot on the new one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandoffRecord {
    pub pair: u32,
    pub start_slot: u64,
    pub resume_slot: u64,
    pub target_channel: u16,
    pub cause: HandoffCause,
}

impl HandoffRecord {
    pub fn delay_slots(&self) -> u64 {
        self.resume_slot - self.start_slot
    }
}

/// Exact per-status slot counts; every measured slot of every pair falls in
/// exactly one bucket.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotBuckets {
    pub transmitting: u64,
    pub collided: u64,
    pub idle: u64,
    pub backlogged: u64,
    pub handoff_overhead: u64,
}

impl SlotBuckets {
    pub fn total(&self) -> u64 {
        self.transmitting + self.collided + self.idle + self.backlogged + self.handoff_overhead
    }
}

/// Slot-status fractions (sum to 1 over the measured window).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotFractions {
    pub transmitting: f64,
    pub collided: f64,
    pub idle: f64,
    pub backlogged: f64,
    pub handoff_overhead: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HandoffStats {
    pub count: u64,
    pub proactive: u64,
    pub reactive: u64,
    pub prediction_miss: u64,
    pub mean_delay_slots: Option<f64>,
    pub p50_delay_slots: Option<f64>,
    pub p95_delay_slots: Option<f64>,
    pub mean_delay_seconds: Option<f64>,
}

/// Per-pair breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerSuMetrics {
    pub pair: u32,
    /// Resolved per-slot arrival probability of this pair.
    pub arrival_prob_x: f64,
    pub completed_packets: u64,
    pub completed_frames: u64,
    pub throughput_pps: f64,
    /// Fraction of measured slots spent cleanly transmitting (the chain's
    /// Transmitting-status definition).
    pub normalized_throughput: f64,
    pub su_pu_collisions: u64,
    pub handoff_count: u64,
    pub mean_handoff_delay_slots: Option<f64>,
    pub buckets: SlotBuckets,
    /// Order-sensitive digest of (slot, phase, channel) transitions; equal
    /// digests mean equal traces.
    pub trace_digest: u64,
}

/// Full report of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub seed: u64,
    pub replication: u64,
    pub duration_slots: u64,
    pub warmup_slots: u64,
    pub measured_slots: u64,
    /// Completed SU packets per second, aggregated over pairs.
    pub su_throughput_pps: f64,
    /// Mean over pairs of the clean-transmitting slot fraction.
    pub su_throughput_normalized: f64,
    pub completed_packets: u64,
    pub completed_frames: u64,
    /// SU-PU collision events per SU packet transmitted; absent when no
    /// packet completed.
    pub collision_rate: Option<f64>,
    pub collisions_per_second: f64,
    pub su_pu_collision_events: u64,
    /// Slots in which an SU transmission actually overlapped a PU packet.
    pub su_pu_overlap_slots: u64,
    /// Type 2 events: distinct occasions of two or more SU pairs
    /// transmitting data on the same channel.
    pub su_su_collision_count: u64,
    /// Type 1 events: RTS contention during rendezvous.
    pub type1_collision_count: u64,
    pub handoff: HandoffStats,
    /// Mean seconds from packet arrival to completed delivery.
    pub mean_service_time_seconds: Option<f64>,
    pub slot_fractions: SlotFractions,
    pub per_su: Vec<PerSuMetrics>,
}

/// Mean and 95% normal-approximation confidence half-width over
/// replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub ci95: f64,
    pub n: usize,
}

pub fn mean_ci(samples: &[f64]) -> MeanCi {
    let n = samples.len();
    if n == 0 {
        return MeanCi { mean: f64::NAN, ci95: f64::NAN, n };
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return MeanCi { mean, ci95: 0.0, n };
    }
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    MeanCi { mean, ci95: 1.96 * (var / n as f64).sqrt(), n }
}

/// Cross-replication summary of the headline metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub replications: usize,
    pub throughput_pps: MeanCi,
    pub throughput_normalized: MeanCi,
    pub collision_rate: Option<MeanCi>,
    pub collisions_per_second: MeanCi,
    pub mean_handoff_delay_slots: Option<MeanCi>,
    pub su_su_collisions_total: u64,
    pub type1_collisions_total: u64,
}

impl ReplicationSummary {
    pub fn from_reports(reports: &[MetricsReport]) -> Self {
        let collect = |f: &dyn Fn(&MetricsReport) -> f64| -> Vec<f64> {
            reports.iter().map(f).collect()
        };
        let rates: Vec<f64> = reports.iter().filter_map(|r| r.collision_rate).collect();
        let delays: Vec<f64> =
            reports.iter().filter_map(|r| r.handoff.mean_delay_slots).collect();
        Self {
            replications: reports.len(),
            throughput_pps: mean_ci(&collect(&|r| r.su_throughput_pps)),
            throughput_normalized: mean_ci(&collect(&|r| r.su_throughput_normalized)),
            collision_rate: (!rates.is_empty()).then(|| mean_ci(&rates)),
            collisions_per_second: mean_ci(&collect(&|r| r.collisions_per_second)),
            mean_handoff_delay_slots: (!delays.is_empty()).then(|| mean_ci(&delays)),
            su_su_collisions_total: reports.iter().map(|r| r.su_su_collision_count).sum(),
            type1_collisions_total: reports.iter().map(|r| r.type1_collision_count).sum(),
        }
    }
}

pub fn percentile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q * (sorted.len() as f64 - 1.0);
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(sorted[lo] * (1.0 - frac) + sorted[hi.min(sorted.len() - 1)] * frac)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 0.0), Some(1.0));
        assert_eq!(percentile(&v, 1.0), Some(4.0));
        assert_eq!(percentile(&v, 0.5), Some(2.5));
        assert_eq!(percentile(&[], 0.5), None);
    }

    #[test]
    fn mean_ci_shrinks_with_samples() {
        let a = mean_ci(&[1.0, 2.0, 3.0, 4.0]);
        assert!((a.mean - 2.5).abs() < 1e-12);
        let wide = mean_ci(&[0.0, 5.0]);
        assert!(wide.ci95 > a.ci95);
    }
}
