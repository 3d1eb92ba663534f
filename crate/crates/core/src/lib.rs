//! # crahn-core
//!
//! A deterministic discrete-time simulator for spectrum handoff in
//! cognitive-radio ad hoc networks that operate without a common control
//! channel, together with a closed-form solver for the three-dimensional
//! discrete-time Markov chain of the reactive-handoff process. The two
//! halves cross-validate each other: the `validate` path runs a
//! chain-matched Monte Carlo against the analytical steady states.
//!
//! Main entry points:
//! - [`config::ScenarioConfig`] + [`engine::run_scenario`]: full protocol
//!   simulation (hopping, rendezvous, proactive/reactive handoff, channel
//!   selection schemes, metrics).
//! - [`markov`]: steady states, throughput `Theta`, PU-occupancy `u`, and
//!   the brute-force oracle.
//! - [`analysis`]: analytic tables and the paired sim-vs-analytic grids.

pub mod analysis;
pub mod chainsim;
pub mod config;
pub mod coordination;
pub mod engine;
pub mod markov;
pub mod metrics;
pub mod model;
pub mod prediction;
pub mod report;
pub mod rng;
pub mod selection;

pub use config::ScenarioConfig;
pub use engine::{run_replications, run_scenario, run_sweep};
pub use markov::{
    brute_force_steady_state, normalized_throughput, pu_occupancy_u, steady_state,
    steady_state_no_pu, steady_state_with_pu, ChainParams, SteadyState,
};
pub use metrics::MetricsReport;
