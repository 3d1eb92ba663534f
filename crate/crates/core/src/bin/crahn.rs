//! Command-line front end: `run` a scenario, `sweep` a parameter axis,
//! `analyze` the Markov chain (optionally against a paired simulation),
//! and `validate` the fixed sim-vs-analytic grid.
//!
//! Exit codes: 0 success, 2 configuration validation failure, 3 validation
//! gate failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crahn_core::analysis::{analyze, validation_grids_sized, AnalyzeConfig};
use crahn_core::config::{
    ConfigError, CoordinationKind, HandoffMode, PuRateProfile, PuRateSpec, ScenarioConfig,
    SuRateSpec,
};
use crahn_core::engine::{run_replications, run_sweep};
use crahn_core::model::PuPacketLength;
use crahn_core::report::{
    self, analyze_to_csv, validation_to_csv, OutputFormat, RunManifest,
};
use crahn_core::selection::SelectionStrategy;

#[derive(Parser)]
#[command(name = "crahn", version, about = "Spectrum-handoff simulator and chain analytics for CR ad hoc networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario (all replications) and emit reports.
    Run(RunArgs),
    /// Sweep one scenario field over a list of values.
    Sweep(SweepArgs),
    /// Solve the chain over an SU-load sweep, optionally paired with a
    /// chain-matched simulation.
    Analyze(AnalyzeArgs),
    /// Run the paired sim-vs-analytic validation grids and gate on the
    /// relative difference.
    Validate(ValidateArgs),
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// JSON scenario file; CLI flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    num_su_pairs: Option<usize>,
    #[arg(long)]
    num_channels: Option<u16>,
    /// Slot length in seconds.
    #[arg(long)]
    slot_seconds: Option<f64>,
    #[arg(long)]
    slots_per_frame: Option<u32>,
    #[arg(long)]
    frames_per_packet: Option<u32>,
    /// Mini slots per slot (W).
    #[arg(long)]
    mini_slots: Option<u32>,
    #[arg(long)]
    tau_low: Option<f64>,
    #[arg(long)]
    tau_high: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    /// SU packet arrival rate in packets/second (all pairs).
    #[arg(long, conflicts_with = "su_arrival_prob")]
    su_rate_pps: Option<f64>,
    /// SU per-slot arrival probability x.
    #[arg(long)]
    su_arrival_prob: Option<f64>,
    /// Heterogeneous SU rates drawn uniformly from [lo, hi] pkt/s.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    su_rate_range_pps: Option<Vec<f64>>,
    /// PU packet arrival rate in packets/second per channel.
    #[arg(long, conflicts_with = "pu_arrival_prob")]
    pu_rate_pps: Option<f64>,
    /// PU per-slot arrival probability p.
    #[arg(long)]
    pu_arrival_prob: Option<f64>,
    /// Linear spread of the PU load across channels, 0 for uniform.
    #[arg(long)]
    pu_spread: Option<f64>,
    /// Fixed PU packet length in slots.
    #[arg(long, conflicts_with = "pu_packet_geometric_mean")]
    pu_packet_slots: Option<u32>,
    /// Geometric PU packet mean in slots.
    #[arg(long)]
    pu_packet_geometric_mean: Option<f64>,
    #[arg(long, value_parser = parse_handoff_mode)]
    handoff_mode: Option<HandoffMode>,
    #[arg(long, value_parser = parse_coordination)]
    coordination: Option<CoordinationKind>,
    #[arg(long, value_parser = parse_selection)]
    selection: Option<SelectionStrategy>,
    /// Sensing error probability chi.
    #[arg(long)]
    chi: Option<f64>,
    /// Sensing delay Ts in slots.
    #[arg(long)]
    ts: Option<u32>,
    /// Whether collided PU packets are retransmitted by the PU.
    #[arg(long)]
    pu_retransmission: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    duration_slots: Option<u64>,
    #[arg(long)]
    replications: Option<u32>,
}

fn parse_handoff_mode(s: &str) -> Result<HandoffMode, String> {
    match s {
        "proactive" => Ok(HandoffMode::Proactive),
        "reactive" => Ok(HandoffMode::Reactive),
        other => Err(format!("unknown handoff mode `{other}`")),
    }
}

fn parse_coordination(s: &str) -> Result<CoordinationKind, String> {
    match s {
        "single" => Ok(CoordinationKind::Single),
        "multiple" => Ok(CoordinationKind::Multiple),
        other => Err(format!("unknown coordination scheme `{other}`")),
    }
}

fn parse_selection(s: &str) -> Result<SelectionStrategy, String> {
    match s {
        "proposed" => Ok(SelectionStrategy::Proposed),
        "random" => Ok(SelectionStrategy::Random),
        "greedy" => Ok(SelectionStrategy::Greedy),
        "bargaining" => Ok(SelectionStrategy::Bargaining),
        other => Err(format!("unknown selection scheme `{other}`")),
    }
}

impl ScenarioArgs {
    fn build(&self) -> Result<ScenarioConfig, String> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
                ScenarioConfig::from_json(&text).map_err(|e| e.to_string())?
            }
            None => ScenarioConfig::default(),
        };
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = self.$field {
                    cfg.$field = v;
                }
            };
        }
        set!(num_su_pairs);
        set!(num_channels);
        set!(slot_seconds);
        set!(slots_per_frame);
        set!(frames_per_packet);
        set!(mini_slots);
        set!(handoff_mode);
        set!(coordination);
        set!(selection);
        set!(pu_retransmission);
        set!(seed);
        set!(duration_slots);
        set!(replications);
        if let Some(v) = self.tau_low {
            cfg.thresholds.tau_low = v;
        }
        if let Some(v) = self.tau_high {
            cfg.thresholds.tau_high = v;
        }
        if let Some(v) = self.theta {
            cfg.thresholds.theta = v;
        }
        if let Some(v) = self.su_rate_pps {
            cfg.su_traffic = SuRateSpec::RatePps(v);
        }
        if let Some(v) = self.su_arrival_prob {
            cfg.su_traffic = SuRateSpec::ArrivalProb(v);
        }
        if let Some(range) = &self.su_rate_range_pps {
            cfg.su_traffic = SuRateSpec::RangePps { lo: range[0], hi: range[1] };
        }
        if let Some(v) = self.pu_rate_pps {
            cfg.pu_rate = PuRateSpec::RatePps(v);
        }
        if let Some(v) = self.pu_arrival_prob {
            cfg.pu_rate = PuRateSpec::ArrivalProb(v);
        }
        if let Some(d) = self.pu_spread {
            cfg.pu_rate_profile =
                if d == 0.0 { PuRateProfile::Uniform } else { PuRateProfile::LinearSpread(d) };
        }
        if let Some(l) = self.pu_packet_slots {
            cfg.pu_packet = PuPacketLength::Fixed(l);
        }
        if let Some(mean) = self.pu_packet_geometric_mean {
            cfg.pu_packet = PuPacketLength::Geometric { mean };
        }
        if let Some(ts) = self.ts {
            cfg.sensing_delay_slots = Some(ts);
        }
        if let Some(chi) = self.chi {
            cfg.sensing_error_chi = chi;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Output directory for result files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// csv or json.
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    output: OutputArgs,
    /// Field to sweep (e.g. num_su_pairs, pu_rate_pps, chi, ts).
    #[arg(long)]
    axis: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    output: OutputArgs,
    #[arg(long, default_value_t = 10)]
    num_channels: usize,
    /// PU arrival probability per slot.
    #[arg(long, default_value_t = 0.01)]
    p: f64,
    /// PU completion probability per slot.
    #[arg(long, default_value_t = 0.1)]
    v: f64,
    /// Comma-separated SU arrival probabilities.
    #[arg(long, value_delimiter = ',')]
    s_values: Option<Vec<f64>>,
    #[arg(long, default_value_t = 10)]
    slots_per_frame: u32,
    #[arg(long, default_value_t = 1)]
    frames_per_packet: u32,
    /// SU-SU collision probability q.
    #[arg(long, default_value_t = 0.0)]
    q: f64,
    /// Sensing delay Ts (defaults to a full frame).
    #[arg(long)]
    ts: Option<u32>,
    /// Pair each point with a chain-matched simulation.
    #[arg(long)]
    with_sim: bool,
    #[arg(long, default_value_t = 1_000_000)]
    sim_duration_slots: u64,
    #[arg(long, default_value_t = 10)]
    sim_replications: u32,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    output: OutputArgs,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Maximum allowed relative sim-vs-analytic difference.
    #[arg(long, default_value_t = 6.0)]
    tolerance_pct: f64,
    /// Slots per paired simulation run.
    #[arg(long, default_value_t = 1_000_000)]
    sim_duration_slots: u64,
    #[arg(long, default_value_t = 10)]
    sim_replications: u32,
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn config_failure(err: &ConfigError) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(2)
}

fn dispatch() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let cfg = match args.scenario.build() {
                Ok(cfg) => cfg,
                Err(msg) => {
                    eprintln!("error: {msg}");
                    return Ok(ExitCode::from(2));
                }
            };
            let resolved = match cfg.resolve() {
                Ok(r) => r,
                Err(err) => return Ok(config_failure(&err)),
            };
            for w in &resolved.warnings {
                eprintln!("warning: {w}");
            }
            let (reports, summary) = run_replications(&cfg).expect("already validated");
            let manifest = RunManifest::new(command_line(), &cfg);
            let written =
                report::emit_run(&args.output.out, args.output.format, &reports, &summary, &manifest)?;
            for path in written {
                println!("wrote {}", path.display());
            }
            println!(
                "throughput {:.3} pkt/s (normalized {:.4}), {} handoffs, {} SU-SU collisions",
                summary.throughput_pps.mean,
                summary.throughput_normalized.mean,
                reports.iter().map(|r| r.handoff.count).sum::<u64>(),
                summary.su_su_collisions_total,
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep(args) => {
            let cfg = match args.scenario.build() {
                Ok(cfg) => cfg,
                Err(msg) => {
                    eprintln!("error: {msg}");
                    return Ok(ExitCode::from(2));
                }
            };
            let table = match run_sweep(&cfg, &args.axis, &args.values) {
                Ok(t) => t,
                Err(crahn_core::engine::EngineError::Config(err)) => {
                    return Ok(config_failure(&err))
                }
                Err(err) => {
                    eprintln!("error: {err}");
                    return Ok(ExitCode::from(2));
                }
            };
            let manifest = RunManifest::new(command_line(), &cfg);
            let written =
                report::emit_sweep(&args.output.out, args.output.format, &table, &manifest)?;
            for path in written {
                println!("wrote {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Analyze(args) => {
            let cfg = AnalyzeConfig {
                num_channels: args.num_channels,
                p: args.p,
                v: args.v,
                s_values: args
                    .s_values
                    .unwrap_or_else(|| AnalyzeConfig::default().s_values),
                slots_per_frame: args.slots_per_frame,
                frames_per_packet: args.frames_per_packet,
                q: args.q,
                ts: args.ts,
                with_sim: args.with_sim,
                sim_pairs: 2,
                sim_duration_slots: args.sim_duration_slots,
                sim_replications: args.sim_replications,
                seed: args.seed,
            };
            let rows = match analyze(&cfg) {
                Ok(rows) => rows,
                Err(err) => {
                    eprintln!("error: {err}");
                    return Ok(ExitCode::from(2));
                }
            };
            std::fs::create_dir_all(&args.output.out)?;
            match args.output.format {
                OutputFormat::Csv => {
                    let path = args.output.out.join("analyze.csv");
                    std::fs::write(&path, analyze_to_csv(&rows))?;
                    println!("wrote {}", path.display());
                }
                OutputFormat::Json => {
                    let path = args.output.out.join("analyze.json");
                    report::write_json(&path, &rows)?;
                    println!("wrote {}", path.display());
                }
            }
            for row in &rows {
                match (row.theta_sim.as_ref(), row.rel_diff_pct) {
                    (Some(sim), Some(diff)) => println!(
                        "s = {:.4}: analytic {:.4}, simulated {:.4} +- {:.4}, diff {:.2}%",
                        row.s, row.theta_analytic, sim.mean, sim.ci95, diff
                    ),
                    _ => println!("s = {:.4}: analytic {:.4}", row.s, row.theta_analytic),
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate(args) => {
            let outcome = match validation_grids_sized(
                args.seed,
                args.tolerance_pct,
                args.sim_duration_slots,
                args.sim_replications,
            ) {
                Ok(o) => o,
                Err(err) => {
                    eprintln!("error: {err}");
                    return Ok(ExitCode::from(2));
                }
            };
            std::fs::create_dir_all(&args.output.out)?;
            let path = match args.output.format {
                OutputFormat::Csv => {
                    let path = args.output.out.join("validate.csv");
                    std::fs::write(&path, validation_to_csv(&outcome))?;
                    path
                }
                OutputFormat::Json => {
                    let path = args.output.out.join("validate.json");
                    report::write_json(&path, &outcome)?;
                    path
                }
            };
            println!("wrote {}", path.display());
            for grid in &outcome.grids {
                println!(
                    "{}: {} (max rel diff {:.2}% <= {:.1}%)",
                    grid.label,
                    if grid.pass { "PASS" } else { "FAIL" },
                    grid.max_rel_diff_pct,
                    grid.tolerance_pct
                );
            }
            Ok(if outcome.pass { ExitCode::SUCCESS } else { ExitCode::from(3) })
        }
    }
}

fn command_line() -> String {
    std::env::args().collect::<Vec<_>>().join(" ")
}
