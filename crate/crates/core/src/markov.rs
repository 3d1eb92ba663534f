//! Steady-state solvers for the three-dimensional discrete-time Markov
//! chain of the reactive spectrum-handoff process, the PU-occupancy chain
//! that yields `u`, and a brute-force power-iteration oracle.
//!
//! A state `(i, j, k)` holds the number of cleanly transmitted slots `i`
//! and collided slots `j` of the current frame (`i + j <= c`) and the index
//! `k` of the frame in flight. `(0, 0, 0)` is Idle, `(0, 0, k)` Backlogged,
//! `(i, 0, k)` with `i >= 1` Transmitting, and states with `j >= 1`
//! Collided. With a sensing delay of `Ts` slots a doomed frame is abandoned
//! after at most `Ts` collided slots, truncating each collided row; `Ts = c`
//! reproduces the unmodified chain.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One-step residual target for the power iteration. The contract is
/// residual < 1e-12; running an extra decade keeps the iterate itself
/// within the 1e-9 per-state comparison tolerance even for stiff
/// low-traffic corners.
pub const POWER_ITERATION_RESIDUAL: f64 = 1e-13;
const MAX_POWER_ITERATIONS: u64 = 50_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum ChainError {
    #[error("invalid chain parameter: {0}")]
    InvalidParameter(String),
    #[error("state space of {0} states exceeds the {1}-state cap")]
    StateSpaceTooLarge(usize, usize),
    #[error("power iteration failed to reach residual {0:e}")]
    NoConvergence(f64),
}

/// Inputs of the 3-D chain. `u` is the probability that at least one of the
/// `m` channels is PU-idle; it can be supplied directly or derived from
/// `(m, p, v)` via [`pu_occupancy_u`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    /// PU packet arrival probability per slot.
    pub p: f64,
    /// SU packet arrival probability per slot.
    pub s: f64,
    /// Frames per SU packet.
    pub h: u32,
    /// Slots per frame.
    pub c: u32,
    /// Probability of a collision among SUs.
    pub q: f64,
    /// Probability that at least one channel is idle.
    pub u: f64,
    /// Sensing delay in slots, `1 <= ts <= c`.
    pub ts: u32,
}

impl ChainParams {
    pub fn validate(&self) -> Result<(), ChainError> {
        for (name, v) in [("p", self.p), ("s", self.s), ("q", self.q), ("u", self.u)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ChainError::InvalidParameter(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if self.c < 1 || self.h < 1 {
            return Err(ChainError::InvalidParameter("c and h must be at least 1".into()));
        }
        if self.ts < 1 || self.ts > self.c {
            return Err(ChainError::InvalidParameter(format!(
                "ts = {} outside [1, c = {}]",
                self.ts, self.c
            )));
        }
        Ok(())
    }
}

/// Chain state `(N_t, N_c, N_f)`.
pub type State = (u32, u32, u32);

/// Steady-state probability map. `degenerate` flags non-ergodic parameter
/// corners (e.g. `s = 0`) where the returned distribution is the absorbing
/// point mass rather than a solved balance system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub probs: BTreeMap<State, f64>,
    pub degenerate: Option<String>,
}

impl SteadyState {
    pub fn prob(&self, state: State) -> f64 {
        self.probs.get(&state).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.probs.values().sum()
    }
}

/// Normalized SU throughput: the stationary mass of all Transmitting states.
pub fn normalized_throughput(ss: &SteadyState) -> f64 {
    ss.probs
        .iter()
        .filter(|&(&(i, j, _k), _)| i >= 1 && j == 0)
        .map(|(_, &v)| v)
        .sum()
}

/// Enumerates the state space for `(c, h, ts)`: Idle, Backlogged per tier,
/// Transmitting per tier, and the `Ts`-truncated Collided rows.
pub fn state_space(c: u32, h: u32, ts: u32) -> Vec<State> {
    let mut states = vec![(0, 0, 0)];
    for k in 1..=h {
        states.push((0, 0, k));
        for i in 1..=c {
            states.push((i, 0, k));
        }
        for i in 0..c {
            let j_max = ts.min(c - i);
            for j in 1..=j_max {
                states.push((i, j, k));
            }
        }
    }
    states
}

/// Collided-state count `[Ts(c - Ts + 1) + Ts(Ts - 1)/2] * h`, exposed for
/// the truncation bookkeeping.
pub fn collided_state_count(c: u32, h: u32, ts: u32) -> u64 {
    let ts = u64::from(ts);
    let c = u64::from(c);
    (ts * (c - ts + 1) + ts * (ts - 1) / 2) * u64::from(h)
}

fn normalize(mut probs: BTreeMap<State, f64>, degenerate: Option<String>) -> SteadyState {
    let total: f64 = probs.values().sum();
    if total > 0.0 {
        for v in probs.values_mut() {
            *v /= total;
        }
    }
    SteadyState { probs, degenerate }
}

/// Case One closed forms: no PU exists (`p = 0`, `u = 1`). All Collided
/// states carry zero mass and the only Backlogged state is `(0, 0, 1)`.
pub fn steady_state_no_pu(params: &ChainParams) -> Result<SteadyState, ChainError> {
    params.validate()?;
    if params.p != 0.0 {
        return Err(ChainError::InvalidParameter(format!(
            "Case One requires p = 0, got {}",
            params.p
        )));
    }
    let mut probs: BTreeMap<State, f64> =
        state_space(params.c, params.h, params.ts).into_iter().map(|s| (s, 0.0)).collect();
    if params.s == 0.0 {
        probs.insert((0, 0, 0), 1.0);
        return Ok(SteadyState { probs, degenerate: Some("s = 0: all mass at Idle".into()) });
    }
    let one_minus_q = 1.0 - params.q;
    probs.insert((0, 0, 1), 1.0);
    for k in 1..=params.h {
        for i in 1..=params.c {
            probs.insert((i, 0, k), one_minus_q);
        }
    }
    probs.insert((0, 0, 0), (1.0 - params.s) * one_minus_q / params.s);
    Ok(normalize(probs, None))
}

/// Case Two closed forms: SUs coexist with PUs (`0 < p < 1`). Applies the
/// tier-1 relations, the k-th-tier recursions and the tier-independence
/// relation `P(c, 0, k) = P(c, 0, k-1)`, then normalizes over the (possibly
/// `Ts`-truncated) state space.
pub fn steady_state_with_pu(params: &ChainParams) -> Result<SteadyState, ChainError> {
    params.validate()?;
    if params.p <= 0.0 || params.p >= 1.0 {
        return Err(ChainError::InvalidParameter(format!(
            "Case Two requires 0 < p < 1, got {}",
            params.p
        )));
    }
    let (p, s, q, u) = (params.p, params.s, params.q, params.u);
    let (c, h, ts) = (params.c, params.h, params.ts);
    if s == 0.0 {
        let mut probs: BTreeMap<State, f64> =
            state_space(c, h, ts).into_iter().map(|st| (st, 0.0)).collect();
        probs.insert((0, 0, 0), 1.0);
        return Ok(SteadyState { probs, degenerate: Some("s = 0: all mass at Idle".into()) });
    }

    let omp = 1.0 - p;
    let access = u * (1.0 - q);
    let mut probs: BTreeMap<State, f64> = BTreeMap::new();
    probs.insert((0, 0, 1), 1.0);

    // First tier in terms of P(0,0,1) = 1.
    for i in 1..=c {
        probs.insert((i, 0, 1), access * omp.powi(i as i32));
    }
    for j in 1..=ts.min(c) {
        probs.insert((0, j, 1), access * p);
    }
    for i in 1..=c.saturating_sub(1) {
        let val = access * p * omp.powi(i as i32);
        for j in 1..=ts.min(c - i) {
            probs.insert((i, j, 1), val);
        }
    }

    // Higher tiers hang off P(c,0,k-1), which is independent of k.
    let p_c0 = access * omp.powi(c as i32);
    for k in 2..=h {
        let backlog = (1.0 - omp.powi(c as i32)) / (access * omp.powi(c as i32)) * p_c0;
        probs.insert((0, 0, k), backlog);
        let p_10 = p_c0 / omp.powi(c as i32 - 1);
        for i in 1..=c {
            probs.insert((i, 0, k), omp.powi(i as i32 - 1) * p_10);
        }
        let p_01 = p / omp.powi(c as i32) * p_c0;
        for j in 1..=ts.min(c) {
            probs.insert((0, j, k), p_01);
        }
        for i in 1..=c.saturating_sub(1) {
            let val = p * omp.powi(i as i32 - 1) * p_10;
            for j in 1..=ts.min(c - i) {
                probs.insert((i, j, k), val);
            }
        }
    }

    probs.insert((0, 0, 0), (1.0 - s) / s * access * omp.powi(c as i32));
    Ok(normalize(probs, None))
}

/// Closed-form solver dispatching on `p`, with the sensing-delay truncation
/// carried in `params.ts`.
pub fn steady_state(params: &ChainParams) -> Result<SteadyState, ChainError> {
    if params.p == 0.0 {
        steady_state_no_pu(params)
    } else {
        steady_state_with_pu(params)
    }
}

/// Sparse transition rows: `(destination index, probability)` pairs.
pub type TransitionRows = Vec<Vec<(usize, f64)>>;

/// Sparse row-stochastic one-step transition matrix over
/// `state_space(c, h, ts)`, built from the transition list of the chain.
pub fn transition_matrix(params: &ChainParams) -> Result<(Vec<State>, TransitionRows), ChainError> {
    params.validate()?;
    let states = state_space(params.c, params.h, params.ts);
    let index: BTreeMap<State, usize> =
        states.iter().enumerate().map(|(n, &s)| (s, n)).collect();
    let (p, s, q, u) = (params.p, params.s, params.q, params.u);
    let (c, h, ts) = (params.c, params.h, params.ts);

    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(states.len());
    for &(i, j, k) in &states {
        let mut row: Vec<(State, f64)> = Vec::new();
        match (i, j, k) {
            (0, 0, 0) => {
                row.push(((0, 0, 0), 1.0 - s));
                row.push(((0, 0, 1), s));
            }
            (0, 0, k) => {
                // Backlogged: blocked, or access with/without a first-slot
                // PU arrival.
                row.push(((0, 0, k), q * u + (1.0 - u)));
                row.push(((1, 0, k), u * (1.0 - p) * (1.0 - q)));
                row.push(((0, 1, k), u * p * (1.0 - q)));
            }
            (i, 0, k) if i < c => {
                row.push(((i + 1, 0, k), 1.0 - p));
                row.push(((i, 1, k), p));
            }
            (_, 0, k) if k < h => {
                // Frame boundary: next frame continues on the same channel.
                row.push(((1, 0, k + 1), 1.0 - p));
                row.push(((0, 1, k + 1), p));
            }
            (_, 0, _) => {
                // Packet complete.
                row.push(((0, 0, 0), 1.0 - s));
                row.push(((0, 0, 1), s));
            }
            (i, j, k) => {
                // Collided: the doomed frame runs until detection (Ts
                // collided slots) or the frame boundary, then the frame is
                // retransmitted from the Backlogged state of its own tier.
                if j < ts.min(c - i) {
                    row.push(((i, j + 1, k), 1.0));
                } else {
                    row.push(((0, 0, k), 1.0));
                }
            }
        }
        rows.push(row.into_iter().map(|(st, pr)| (index[&st], pr)).collect());
    }
    Ok((states, rows))
}

fn power_iteration(
    rows: &[Vec<(usize, f64)>],
    residual_target: f64,
) -> Result<Vec<f64>, ChainError> {
    let n = rows.len();
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut iterations = 0u64;
    loop {
        next.iter_mut().for_each(|v| *v = 0.0);
        for (from, row) in rows.iter().enumerate() {
            let mass = pi[from];
            if mass == 0.0 {
                continue;
            }
            for &(to, pr) in row {
                next[to] += mass * pr;
            }
        }
        let residual = pi
            .iter()
            .zip(next.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        // Lazy step keeps periodic chains convergent without changing the
        // stationary distribution.
        for (a, b) in pi.iter_mut().zip(next.iter()) {
            *a = 0.5 * *a + 0.5 * *b;
        }
        iterations += 1;
        if residual < residual_target {
            let total: f64 = pi.iter().sum();
            pi.iter_mut().for_each(|v| *v /= total);
            return Ok(pi);
        }
        if iterations >= MAX_POWER_ITERATIONS {
            return Err(ChainError::NoConvergence(residual_target));
        }
    }
}

/// Validation oracle: enumerates the states, builds the explicit one-step
/// transition matrix and finds the stationary distribution by (lazy) power
/// iteration to a residual below 1e-12.
pub fn brute_force_steady_state(params: &ChainParams) -> Result<SteadyState, ChainError> {
    let (states, rows) = transition_matrix(params)?;
    if states.len() > 100_000 {
        return Err(ChainError::StateSpaceTooLarge(states.len(), 100_000));
    }
    let pi = power_iteration(&rows, POWER_ITERATION_RESIDUAL)?;
    let degenerate = (params.s == 0.0).then(|| "s = 0: chain is not ergodic".to_string());
    Ok(SteadyState {
        probs: states.into_iter().zip(pi).collect(),
        degenerate,
    })
}

/// Stationary distribution `g` of the number of PU-busy channels and the
/// probability `u` that at least one of the `m` channels is idle.
///
/// In each slot every busy channel completes with probability `v`; the pool
/// of idle channels (including the just-freed ones, which is what permits
/// back-to-back packets) then draws new arrivals with probability `p` each.
pub fn pu_occupancy_u(m: usize, p: f64, v: f64) -> Result<(Vec<f64>, f64), ChainError> {
    if m == 0 {
        return Err(ChainError::InvalidParameter("M must be at least 1".into()));
    }
    for (name, val) in [("p", p), ("v", v)] {
        if !(0.0..=1.0).contains(&val) {
            return Err(ChainError::InvalidParameter(format!("{name} = {val} outside [0, 1]")));
        }
    }
    let departures: Vec<Vec<f64>> = (0..=m).map(|a| binomial_pmf(a, v)).collect();
    let arrivals: Vec<Vec<f64>> = (0..=m).map(|g| binomial_pmf(g, p)).collect();
    let mut rows: TransitionRows = Vec::with_capacity(m + 1);
    for (a, dep) in departures.iter().enumerate() {
        let mut row = vec![0.0; m + 1];
        for (l, &pr_d) in dep.iter().enumerate() {
            let idle_pool = m - a + l;
            for (arrive, &pr_a) in arrivals[idle_pool].iter().enumerate() {
                let b = a - l + arrive;
                row[b] += pr_d * pr_a;
            }
        }
        rows.push(row.into_iter().enumerate().filter(|&(_, pr)| pr > 0.0).collect());
    }
    let g = power_iteration(&rows, POWER_ITERATION_RESIDUAL)?;
    let u = g[..m].iter().sum();
    Ok((g, u))
}

/// Binomial(n, prob) pmf over 0..=n, built multiplicatively.
fn binomial_pmf(n: usize, prob: f64) -> Vec<f64> {
    if n == 0 {
        return vec![1.0];
    }
    if prob <= 0.0 {
        let mut v = vec![0.0; n + 1];
        v[0] = 1.0;
        return v;
    }
    if prob >= 1.0 {
        let mut v = vec![0.0; n + 1];
        v[n] = 1.0;
        return v;
    }
    let mut pmf = Vec::with_capacity(n + 1);
    let mut term = (1.0 - prob).powi(n as i32);
    for k in 0..=n {
        pmf.push(term);
        if k < n {
            term *= (n - k) as f64 / (k + 1) as f64 * prob / (1.0 - prob);
        }
    }
    pmf
}

/// True when the PU parameters absorb every channel into the busy state.
pub fn pu_occupancy_is_degenerate(p: f64, v: f64) -> bool {
    p >= 1.0 && v <= 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params(p: f64, s: f64, h: u32, c: u32, q: f64, u: f64, ts: u32) -> ChainParams {
        ChainParams { p, s, h, c, q, u, ts }
    }

    #[test]
    fn no_pu_hand_normalization() {
        // c = 2, h = 1, s = 0.5, q = 0: four live states each at 1/4.
        let ss = steady_state_no_pu(&params(0.0, 0.5, 1, 2, 0.0, 1.0, 2)).unwrap();
        assert_abs_diff_eq!(ss.prob((0, 0, 1)), 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(normalized_throughput(&ss), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(ss.total(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn no_pu_full_su_collisions_absorb_the_backlog() {
        let ss = steady_state_no_pu(&params(0.0, 0.5, 2, 3, 1.0, 1.0, 3)).unwrap();
        assert_abs_diff_eq!(ss.prob((0, 0, 1)), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(normalized_throughput(&ss), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn no_pu_zero_su_rate_is_degenerate_idle() {
        let ss = steady_state_no_pu(&params(0.0, 0.0, 1, 2, 0.0, 1.0, 2)).unwrap();
        assert!(ss.degenerate.is_some());
        assert_abs_diff_eq!(ss.prob((0, 0, 0)), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn with_pu_hand_normalization() {
        // c = 1, h = 1, s = 1, q = 0, u = 1, p = 0.2: states B, T, C at
        // 0.5 / 0.4 / 0.1 by hand.
        let ss = steady_state_with_pu(&params(0.2, 1.0, 1, 1, 0.0, 1.0, 1)).unwrap();
        assert_abs_diff_eq!(ss.prob((0, 0, 1)), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(ss.prob((1, 0, 1)), 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(ss.prob((0, 1, 1)), 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(normalized_throughput(&ss), 0.4, epsilon = 1e-12);
    }

    #[test]
    fn small_p_limit_approaches_the_no_pu_case() {
        let with = steady_state_with_pu(&params(1e-12, 0.4, 2, 4, 0.1, 1.0, 4)).unwrap();
        let without = steady_state_no_pu(&params(0.0, 0.4, 2, 4, 0.1, 1.0, 4)).unwrap();
        assert_abs_diff_eq!(
            normalized_throughput(&with),
            normalized_throughput(&without),
            epsilon = 1e-9
        );
    }

    #[test]
    fn collided_state_counts() {
        assert_eq!(collided_state_count(10, 1, 10), 55); // c(c+1)/2
        assert_eq!(collided_state_count(10, 1, 1), 10);
        assert_eq!(collided_state_count(10, 1, 3), 27); // 3*8 + 3
        let states = state_space(10, 1, 3);
        let collided = states.iter().filter(|&&(_, j, _)| j >= 1).count();
        assert_eq!(collided as u64, 27);
    }

    #[test]
    fn full_sensing_delay_reproduces_the_unmodified_chain() {
        // Ts = c leaves every collided row untruncated; the conditional
        // transmitting-state masses must match a chain built without any
        // truncation, and the brute force must agree state by state.
        let pr = params(0.05, 0.2, 2, 6, 0.1, 0.97, 6);
        let a = steady_state_with_pu(&pr).unwrap();
        assert_eq!(
            a.probs.len(),
            state_space(pr.c, pr.h, pr.c).len(),
            "Ts = c must enumerate the full state space"
        );
        let oracle = brute_force_steady_state(&pr).unwrap();
        for (state, &prob) in &a.probs {
            assert_abs_diff_eq!(prob, oracle.prob(*state), epsilon = 1e-9);
        }
    }

    #[test]
    fn closed_forms_match_brute_force_on_grids() {
        for &(p, s, q, u, c, h, ts) in &[
            (0.0, 0.5, 0.0, 1.0, 2u32, 1u32, 2u32),
            (0.0, 0.3, 0.2, 1.0, 5, 3, 5),
            (0.1, 0.1, 0.0, 0.9, 10, 1, 10),
            (0.02, 0.05, 0.05, 0.99, 10, 2, 4),
            (0.3, 0.8, 0.5, 0.6, 4, 4, 2),
            (0.15, 1.0, 0.0, 1.0, 6, 2, 1),
        ] {
            let pr = params(p, s, h, c, q, u, ts);
            let closed = steady_state(&pr).unwrap();
            let oracle = brute_force_steady_state(&pr).unwrap();
            for (state, &v) in &closed.probs {
                assert!(
                    (v - oracle.prob(*state)).abs() < 1e-9,
                    "state {state:?} at {pr:?}: closed {v} vs oracle {}",
                    oracle.prob(*state)
                );
            }
        }
    }

    #[test]
    fn transition_rows_are_stochastic() {
        let (_, rows) = transition_matrix(&params(0.07, 0.2, 3, 8, 0.1, 0.95, 5)).unwrap();
        for row in rows {
            let total: f64 = row.iter().map(|&(_, pr)| pr).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn tier_independence_of_the_frame_boundary_state() {
        let pr = params(0.08, 0.3, 4, 6, 0.0, 0.98, 6);
        let oracle = brute_force_steady_state(&pr).unwrap();
        let reference = oracle.prob((pr.c, 0, 1));
        for k in 2..=pr.h {
            assert_abs_diff_eq!(oracle.prob((pr.c, 0, k)), reference, epsilon = 1e-9);
        }
    }

    #[test]
    fn stationarity_of_closed_forms_under_the_explicit_matrix() {
        let pr = params(0.12, 0.25, 2, 7, 0.2, 0.9, 7);
        let closed = steady_state(&pr).unwrap();
        let (states, rows) = transition_matrix(&pr).unwrap();
        let idx: BTreeMap<State, usize> =
            states.iter().enumerate().map(|(n, &s)| (s, n)).collect();
        let mut pushed = vec![0.0; states.len()];
        for (state, &mass) in &closed.probs {
            for &(to, prb) in &rows[idx[state]] {
                pushed[to] += mass * prb;
            }
        }
        for (state, &mass) in &closed.probs {
            assert!(
                (pushed[idx[state]] - mass).abs() < 1e-9,
                "pi T != pi at {state:?}"
            );
        }
    }

    #[test]
    fn throughput_is_monotone_in_pu_load() {
        let mut last = f64::INFINITY;
        for step in 1..=8 {
            let p = 0.05 * step as f64;
            let ss = steady_state_with_pu(&params(p, 0.3, 1, 10, 0.0, 0.95, 10)).unwrap();
            let theta = normalized_throughput(&ss);
            assert!(theta <= last + 1e-12, "throughput rose with p at {p}");
            last = theta;
        }
    }

    #[test]
    fn earlier_detection_never_hurts_throughput() {
        let mut last = -1.0;
        for ts in (1..=10).rev() {
            let ss = steady_state_with_pu(&params(0.08, 0.3, 1, 10, 0.0, 0.95, ts)).unwrap();
            let theta = normalized_throughput(&ss);
            assert!(theta + 1e-12 >= last, "throughput fell as Ts shrank to {ts}");
            last = theta;
        }
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(matches!(
            params(1.5, 0.5, 1, 4, 0.0, 1.0, 4).validate(),
            Err(ChainError::InvalidParameter(_))
        ));
        assert!(matches!(
            params(0.1, 0.5, 1, 4, 0.0, 1.0, 5).validate(),
            Err(ChainError::InvalidParameter(_))
        ));
        assert!(matches!(
            steady_state_with_pu(&params(0.0, 0.5, 1, 4, 0.0, 1.0, 4)),
            Err(ChainError::InvalidParameter(_))
        ));
        assert!(matches!(
            steady_state_no_pu(&params(0.2, 0.5, 1, 4, 0.0, 1.0, 4)),
            Err(ChainError::InvalidParameter(_))
        ));
        assert!(matches!(pu_occupancy_u(0, 0.1, 0.1), Err(ChainError::InvalidParameter(_))));
    }

    #[test]
    fn oversized_state_spaces_are_refused() {
        let big = params(0.1, 0.5, 1, 500, 0.0, 1.0, 500);
        assert!(matches!(
            brute_force_steady_state(&big),
            Err(ChainError::StateSpaceTooLarge(_, _))
        ));
    }

    #[test]
    fn pu_occupancy_trivial_and_hand_points() {
        let (_, u) = pu_occupancy_u(7, 0.0, 0.3).unwrap();
        assert_abs_diff_eq!(u, 1.0, epsilon = 1e-9);

        // M = 1, v = 1, p = 0.3: every packet lasts one slot and the freed
        // channel re-arrives with probability p, so g1 = p and u = 0.7.
        let (g, u) = pu_occupancy_u(1, 0.3, 1.0).unwrap();
        assert_abs_diff_eq!(g[1], 0.3, epsilon = 1e-9);
        assert_abs_diff_eq!(u, 0.7, epsilon = 1e-9);

        // M = 1, p = v = 0.1: two-state birth-death with birth 0.1 and
        // death v(1-p) = 0.09, solved by hand to g = (9/19, 10/19).
        let (g, u) = pu_occupancy_u(1, 0.1, 0.1).unwrap();
        assert_abs_diff_eq!(g[0], 9.0 / 19.0, epsilon = 1e-9);
        assert_abs_diff_eq!(g[1], 10.0 / 19.0, epsilon = 1e-9);
        assert_abs_diff_eq!(u, 9.0 / 19.0, epsilon = 1e-9);
    }

    #[test]
    fn pu_occupancy_degenerate_absorbs_all_channels() {
        assert!(pu_occupancy_is_degenerate(1.0, 0.0));
        let (g, u) = pu_occupancy_u(3, 1.0, 0.0).unwrap();
        assert_abs_diff_eq!(g[3], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(u, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn pu_occupancy_rows_are_stochastic_against_simulation() {
        // Spot-check the count chain against a direct per-channel Monte
        // Carlo of the same semantics.
        use crate::rng::stream_rng;
        use rand::Rng;
        let (m, p, v) = (4usize, 0.15, 0.25);
        let (_, u) = pu_occupancy_u(m, p, v).unwrap();
        let mut rng = stream_rng(11, "pu-occupancy-test", 0, 0);
        let mut busy = vec![false; m];
        let mut at_least_one_idle = 0u64;
        let slots = 2_000_000u64;
        for _ in 0..slots {
            for b in busy.iter_mut() {
                *b = if *b {
                    if rng.random::<f64>() < v {
                        rng.random::<f64>() < p
                    } else {
                        true
                    }
                } else {
                    rng.random::<f64>() < p
                };
            }
            if busy.iter().any(|b| !b) {
                at_least_one_idle += 1;
            }
        }
        let u_sim = at_least_one_idle as f64 / slots as f64;
        assert!(
            (u_sim - u).abs() / u < 0.01,
            "simulated u {u_sim:.5} vs analytic {u:.5}"
        );
    }
}
