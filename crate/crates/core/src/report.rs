//! Result emission: stable-schema CSV and JSON files plus the run manifest.
//!
//! CSV column orders are fixed and documented in the README; JSON mirrors
//! the `MetricsReport` field names. Sweep tables are emitted in long format
//! (one row per axis value and replication) for direct plotting.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::analysis::{AnalyzeRow, ValidationOutcome};
use crate::config::ScenarioConfig;
use crate::engine::SweepTable;
use crate::metrics::{MetricsReport, ReplicationSummary};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), ReportError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)
            .map_err(|source| ReportError::Io { path: dir.to_path_buf(), source })?;
    }
    let mut f = fs::File::create(path)
        .map_err(|source| ReportError::Io { path: path.to_path_buf(), source })?;
    f.write_all(contents.as_bytes())
        .map_err(|source| ReportError::Io { path: path.to_path_buf(), source })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ReportError> {
    let text = serde_json::to_string_pretty(value)?;
    write_file(path, &(text + "\n"))
}

/// Reproducibility manifest written next to every result set.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest<'a> {
    pub artifact: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub unix_time_s: u64,
    pub config: &'a ScenarioConfig,
}

impl<'a> RunManifest<'a> {
    pub fn new(command: String, config: &'a ScenarioConfig) -> Self {
        Self {
            artifact: "crahn",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed: config.seed,
            unix_time_s: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            config,
        }
    }
}

const REPORT_COLUMNS: &str = "replication,seed,duration_slots,measured_slots,throughput_pps,\
throughput_normalized,completed_packets,completed_frames,collision_rate,collisions_per_second,\
su_pu_collision_events,su_pu_overlap_slots,su_su_collisions,type1_collisions,handoff_count,\
mean_handoff_delay_slots,p50_handoff_delay_slots,p95_handoff_delay_slots,mean_service_time_s,\
frac_transmitting,frac_collided,frac_idle,frac_backlogged,frac_handoff_overhead";

fn opt(value: Option<f64>) -> String {
    value.map(|v| format!("{v}")).unwrap_or_default()
}

fn report_row(r: &MetricsReport) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.replication,
        r.seed,
        r.duration_slots,
        r.measured_slots,
        r.su_throughput_pps,
        r.su_throughput_normalized,
        r.completed_packets,
        r.completed_frames,
        opt(r.collision_rate),
        r.collisions_per_second,
        r.su_pu_collision_events,
        r.su_pu_overlap_slots,
        r.su_su_collision_count,
        r.type1_collision_count,
        r.handoff.count,
        opt(r.handoff.mean_delay_slots),
        opt(r.handoff.p50_delay_slots),
        opt(r.handoff.p95_delay_slots),
        opt(r.mean_service_time_seconds),
        r.slot_fractions.transmitting,
        r.slot_fractions.collided,
        r.slot_fractions.idle,
        r.slot_fractions.backlogged,
        r.slot_fractions.handoff_overhead,
    )
}

pub fn reports_to_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from(REPORT_COLUMNS);
    out.push('\n');
    for r in reports {
        out.push_str(&report_row(r));
        out.push('\n');
    }
    out
}

pub fn sweep_to_csv(table: &SweepTable) -> String {
    let mut out = format!("axis,value,{REPORT_COLUMNS}\n");
    for row in &table.rows {
        out.push_str(&format!("{},{},{}\n", table.axis, row.value, report_row(&row.report)));
    }
    out
}

pub fn analyze_to_csv(rows: &[AnalyzeRow]) -> String {
    let mut out = String::from(
        "s,p,v,u,ts,theta_analytic,theta_sim_mean,theta_sim_ci95,rel_diff_pct,note\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.s,
            r.p,
            r.v,
            r.u,
            r.ts,
            r.theta_analytic,
            opt(r.theta_sim.map(|m| m.mean)),
            opt(r.theta_sim.map(|m| m.ci95)),
            opt(r.rel_diff_pct),
            r.note.as_deref().unwrap_or(""),
        ));
    }
    out
}

pub fn validation_to_csv(outcome: &ValidationOutcome) -> String {
    let mut out = String::from(
        "grid,ts,s,theta_sim,theta_analytic,rel_diff_pct,tolerance_pct,pass\n",
    );
    for grid in &outcome.grids {
        for r in &grid.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                grid.label,
                grid.ts,
                r.s,
                opt(r.theta_sim.map(|m| m.mean)),
                r.theta_analytic,
                opt(r.rel_diff_pct),
                grid.tolerance_pct,
                grid.pass,
            ));
        }
    }
    out
}

/// Writes a replication set (reports + summary + manifest) to `dir`.
pub fn emit_run(
    dir: &Path,
    format: OutputFormat,
    reports: &[MetricsReport],
    summary: &ReplicationSummary,
    manifest: &RunManifest<'_>,
) -> Result<Vec<PathBuf>, ReportError> {
    let mut written = Vec::new();
    let data_path = dir.join(match format {
        OutputFormat::Csv => "reports.csv",
        OutputFormat::Json => "reports.json",
    });
    match format {
        OutputFormat::Csv => write_file(&data_path, &reports_to_csv(reports))?,
        OutputFormat::Json => write_json(&data_path, &reports)?,
    }
    written.push(data_path);

    let summary_path = dir.join("summary.json");
    write_json(&summary_path, summary)?;
    written.push(summary_path);

    let manifest_path = dir.join("run-manifest.json");
    write_json(&manifest_path, manifest)?;
    written.push(manifest_path);
    Ok(written)
}

pub fn emit_sweep(
    dir: &Path,
    format: OutputFormat,
    table: &SweepTable,
    manifest: &RunManifest<'_>,
) -> Result<Vec<PathBuf>, ReportError> {
    let mut written = Vec::new();
    match format {
        OutputFormat::Csv => {
            let path = dir.join("sweep.csv");
            write_file(&path, &sweep_to_csv(table))?;
            written.push(path);
        }
        OutputFormat::Json => {
            #[derive(Serialize)]
            struct Row<'a> {
                value: f64,
                replication: u64,
                report: &'a MetricsReport,
            }
            #[derive(Serialize)]
            struct Out<'a> {
                axis: &'a str,
                rows: Vec<Row<'a>>,
            }
            let out = Out {
                axis: &table.axis,
                rows: table
                    .rows
                    .iter()
                    .map(|r| Row { value: r.value, replication: r.replication, report: &r.report })
                    .collect(),
            };
            let path = dir.join("sweep.json");
            write_json(&path, &out)?;
            written.push(path);
        }
    }
    let manifest_path = dir.join("run-manifest.json");
    write_json(&manifest_path, manifest)?;
    written.push(manifest_path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_headers_are_stable() {
        assert!(REPORT_COLUMNS.starts_with("replication,seed,duration_slots"));
        assert_eq!(REPORT_COLUMNS.split(',').count(), 24);
    }

    #[test]
    fn report_csv_rows_match_column_count() {
        let cfg = ScenarioConfig {
            num_su_pairs: 2,
            duration_slots: 2_000,
            replications: 2,
            su_traffic: crate::config::SuRateSpec::ArrivalProb(0.05),
            ..ScenarioConfig::default()
        };
        let (reports, _) = crate::engine::run_replications(&cfg).unwrap();
        let csv = reports_to_csv(&reports);
        let mut lines = csv.lines();
        let header_cols = lines.next().unwrap().split(',').count();
        for line in lines {
            assert_eq!(line.split(',').count(), header_cols);
        }
    }

    #[test]
    fn json_round_trip_preserves_the_report_structure() {
        let cfg = ScenarioConfig {
            num_su_pairs: 2,
            duration_slots: 2_000,
            replications: 1,
            su_traffic: crate::config::SuRateSpec::ArrivalProb(0.05),
            ..ScenarioConfig::default()
        };
        let (reports, _) = crate::engine::run_replications(&cfg).unwrap();
        let text = serde_json::to_string(&reports[0]).unwrap();
        let back: MetricsReport = serde_json::from_str(&text).unwrap();
        assert_eq!(reports[0], back);
        assert_eq!(text, serde_json::to_string(&back).unwrap());
    }
}
