//! Stage drivers shared by the command-line tool and the acceptance tests.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::ServiceClock;
use crate::config::{ConfigError, RunConfig};
use crate::fusion::{run_fusion, FusionError, FusionRun};
use crate::gtfs::{build_real_timetable, observations_from_segments, parse_gtfs, write_real_gtfs, GtfsError, RealTimetableReport};
use crate::ml_harness::{run_evaluation, EvaluationReport, HarnessError};
use crate::synth::SynthError;
use crate::vehicle_flow::{ingest_traces, read_traces, IngestStats, SegmentStore, TraceReadReport, VehicleFlowError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Gtfs(#[from] GtfsError),
    #[error(transparent)]
    VehicleFlow(#[from] VehicleFlowError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

impl PipelineError {
    /// 2 when configuration or inputs are rejected, 1 when a stage fails while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Usage(_) => 2,
            PipelineError::Gtfs(e) => match e {
                GtfsError::Io { .. } | GtfsError::Csv { .. } | GtfsError::NotSingleDay => 1,
                _ => 2,
            },
            PipelineError::VehicleFlow(e) => match e {
                VehicleFlowError::MalformedSegment { .. } | VehicleFlowError::InvalidPeriod { .. } => 2,
                _ => 1,
            },
            PipelineError::Fusion(e) => match e {
                FusionError::Survey { .. } | FusionError::Store { .. } => 2,
                _ => 1,
            },
            PipelineError::Harness(e) => match e {
                HarnessError::Config(_) | HarnessError::Instances { .. } => 2,
                _ => 1,
            },
            PipelineError::Synth(e) => match e {
                SynthError::Config(_) => 2,
                SynthError::Write { .. } => 1,
            },
        }
    }
}

fn require(field: &'static str, path: &Path) -> Result<(), PipelineError> {
    if path.exists() {
        Ok(())
    } else {
        Err(ConfigError::MissingPath { field, path: path.to_path_buf() }.into())
    }
}

fn segments_root(cfg: &RunConfig) -> Result<&Path, PipelineError> {
    cfg.paths.segments.as_deref().ok_or_else(|| PipelineError::Usage("paths.segments is not configured".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub read: TraceReadReport,
    pub stats: IngestStats,
    pub dates: Vec<NaiveDate>,
    pub store: PathBuf,
}

/// Matches a raw trace file against the planned feed and writes the segment store.
pub fn run_ingest(cfg: &RunConfig, traces: &Path) -> Result<IngestSummary, PipelineError> {
    let root = segments_root(cfg)?;
    require("gtfs", &cfg.paths.gtfs)?;
    require("traces", traces)?;
    let clock = ServiceClock::new(cfg.clock.utc_offset_s);
    let planned = parse_gtfs(&cfg.paths.gtfs)?;
    let (records, read) = read_traces(traces)?;
    let (store, _, stats) = ingest_traces(records, &planned, &clock);
    store.write(root)?;
    Ok(IngestSummary { read, stats, dates: store.dates().collect(), store: root.to_path_buf() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealFeedSummary {
    pub date: NaiveDate,
    pub dir: PathBuf,
    pub report: RealTimetableReport,
}

/// Rebuilds the operated timetable for each stored date (or only `dates`).
pub fn run_build_real(cfg: &RunConfig, dates: &[NaiveDate]) -> Result<Vec<RealFeedSummary>, PipelineError> {
    let seg_root = segments_root(cfg)?;
    let out_root = cfg.paths.real_gtfs.as_deref().ok_or_else(|| PipelineError::Usage("paths.real_gtfs is not configured".into()))?;
    require("gtfs", &cfg.paths.gtfs)?;
    require("segments", seg_root)?;
    let clock = ServiceClock::new(cfg.clock.utc_offset_s);
    let planned = parse_gtfs(&cfg.paths.gtfs)?;
    let store = if dates.is_empty() { SegmentStore::open(seg_root)? } else { SegmentStore::open_dates(seg_root, dates)? };
    let wanted: Vec<NaiveDate> = if dates.is_empty() { store.dates().collect() } else { dates.to_vec() };
    let mut out = Vec::new();
    for date in wanted {
        let obs = observations_from_segments(store.segments_on(date));
        let (tt, report) = build_real_timetable(&obs, &planned, date, &clock)?;
        let dir = write_real_gtfs(&tt, out_root)?;
        out.push(RealFeedSummary { date, dir, report });
    }
    Ok(out)
}

/// Fuses the configured survey after checking that every input exists.
pub fn run_fuse(cfg: &RunConfig) -> Result<FusionRun, PipelineError> {
    cfg.paths.check_inputs()?;
    Ok(run_fusion(cfg)?)
}

/// Evaluates an instance file, defaulting to the fusion output.
pub fn run_evaluate(cfg: &RunConfig, instances: Option<&Path>) -> Result<EvaluationReport, PipelineError> {
    let default = cfg.paths.instances();
    let path = instances.unwrap_or(&default);
    require("instances", path)?;
    Ok(run_evaluation(cfg, path)?)
}

pub fn read_report(path: &Path) -> Result<EvaluationReport, PipelineError> {
    require("report", path)?;
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Instances { path: path.to_path_buf(), message: e.to_string() }.into())
}

/// Plain-text summary of an evaluation report.
pub fn render_report(r: &EvaluationReport) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    let _ = writeln!(s, "config {}  seed {}  instances {}  classes {}", &r.config_hash[..12.min(r.config_hash.len())], r.seed, r.instances, r.classes.join(","));
    for m in &r.scenarios {
        let _ = writeln!(s, "\n{}  features {}  train {}  holdout {}", m.scenario, m.features, m.train_instances, m.final_instances);
        for g in &m.per_method {
            let _ = writeln!(s, "  {:<14} cv kappa {:.4}  cv acc {:.4}  [{}]", g.method, g.mean_kappa, g.mean_accuracy, g.params);
        }
        let _ = writeln!(
            s,
            "  best {} [{}]  holdout acc {:.4}  kappa {:.4}",
            m.best.method, m.best.params, m.final_scores.accuracy, m.final_scores.kappa
        );
        for imp in m.importance.iter().take(5) {
            let _ = writeln!(s, "    {:<48} {:+.4}", imp.feature, imp.mean_kappa_drop);
        }
    }
    s
}
