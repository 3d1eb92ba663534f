//! Slot-granularity channel-availability prediction and the handoff and
//! candidate policies built on it.
//!
//! All probabilities are computed by the literal finite summations of the
//! slotted traffic model (they are a renewal-style approximation and are
//! used as the policy definition, not corrected against the simulated
//! process). `prob_no_arrival` and `prob_off_exceeds` collapse to the
//! geometric closed form `(1-x)^n`, which the tests pin to 1e-12.

use serde::{Deserialize, Serialize};

use crate::model::ChannelId;

/// Thresholds for the switch policy (`tau_low`), the candidate policy
/// (`tau_high`, `theta`), and the candidate horizon `eta = c + 1` slots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionThresholds {
    pub tau_low: f64,
    pub tau_high: f64,
    pub theta: f64,
    pub eta: u32,
}

impl PredictionThresholds {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.tau_low)
            || !(0.0..=1.0).contains(&self.tau_high)
            || !(0.0..=1.0).contains(&self.theta)
        {
            return Err("thresholds must lie in [0, 1]".into());
        }
        if self.tau_low > self.tau_high {
            return Err(format!("tau_low {} exceeds tau_high {}", self.tau_low, self.tau_high));
        }
        if self.eta == 0 {
            return Err("eta must be at least one slot".into());
        }
        Ok(())
    }
}

/// Predicted availability of one channel at the decision slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelForecast {
    pub channel_id: ChannelId,
    /// Pr(N_k(n) = 0): the channel is idle at the decision slot.
    pub prob_idle_at_n: f64,
    /// Pr(t_off > eta): the idle period outlasts a frame plus a slot.
    pub prob_off_exceeds_eta: f64,
}

/// Sum of the first `k` terms of the geometric pmf, `sum x(1-x)^(i-1)`.
fn geometric_cdf(k: u32, x: f64) -> f64 {
    let mut acc = 0.0;
    let mut term = x;
    for _ in 0..k {
        acc += term;
        term *= 1.0 - x;
    }
    acc
}

/// Probability that no PU arrival occurs between slot 1 and slot `n`.
///
/// Evaluated as the literal summation `1 - sum_{i=1..n} x(1-x)^(i-1)`,
/// which equals `(1-x)^n`.
pub fn prob_no_arrival(n: u32, x: f64) -> f64 {
    debug_assert!(n >= 1);
    1.0 - geometric_cdf(n, x)
}

/// Total probability that a channel with per-slot arrival probability `x`
/// and PU packet length `l` is idle at slot `n`: the sum of the no-arrival
/// term and the arrive-and-depart terms for 1..U packets, U = floor(n/l).
pub fn prob_idle_at_slot(n: u32, x: f64, l: u32) -> f64 {
    debug_assert!(n >= 1 && l >= 1);
    let mut total = prob_no_arrival(n, x);
    let max_packets = n / l;
    for h in 1..=max_packets {
        // h packets fit only if the h-th can start at slot m in [h, n - h*l].
        let hl = h * l;
        if n < hl + h {
            continue;
        }
        let mut term_sum = 0.0;
        // x^h (1-x)^(m-h), built incrementally over m.
        let mut weight = x.powi(h as i32);
        for m in h..=(n - hl) {
            let tail = n - m - hl + 1;
            term_sum += (1.0 - geometric_cdf(tail, x)) * weight;
            weight *= 1.0 - x;
        }
        total += term_sum;
    }
    total.clamp(0.0, 1.0)
}

/// Probability that an idle period lasts longer than `eta` slots; by the
/// memorylessness of the geometric OFF distribution this is `(1-x)^eta`,
/// evaluated as the literal summation.
pub fn prob_off_exceeds(eta: u32, x: f64) -> f64 {
    debug_assert!(eta >= 1);
    1.0 - geometric_cdf(eta, x)
}

/// Switch policy: handoff exactly when the predicted idle probability of
/// the current channel falls strictly below `tau_low`.
pub fn should_handoff(current: &ChannelForecast, thresholds: &PredictionThresholds) -> bool {
    current.prob_idle_at_n < thresholds.tau_low
}

/// Candidate policy for a single channel.
pub fn is_candidate(forecast: &ChannelForecast, thresholds: &PredictionThresholds) -> bool {
    forecast.prob_idle_at_n >= thresholds.tau_high
        && forecast.prob_off_exceeds_eta >= thresholds.theta
}

/// Builds the candidate list (LSC): channels passing both thresholds,
/// ordered by descending idle probability, ties broken by ascending id so
/// every node derives the same list.
pub fn candidate_channels(
    forecasts: &[ChannelForecast],
    thresholds: &PredictionThresholds,
) -> Vec<ChannelId> {
    let mut picked: Vec<&ChannelForecast> =
        forecasts.iter().filter(|f| is_candidate(f, thresholds)).collect();
    picked.sort_by(|a, b| {
        b.prob_idle_at_n
            .total_cmp(&a.prob_idle_at_n)
            .then(a.channel_id.cmp(&b.channel_id))
    });
    picked.into_iter().map(|f| f.channel_id).collect()
}
