//! Vehicle GPS stream processing: trace replay, matching against the planned
//! timetable, per-edge segment aggregation with stopping events, a file
//! segment store and experience queries over it.

mod events;
mod ingest;
mod segments;
mod store;
mod trace;
mod tracker;

use std::path::PathBuf;

use thiserror::Error;

use crate::clock::Epoch;

pub use events::{count_stopping_events, speed_series, StopEventCounts, DEFAULT_STOP_SPEED_MPS, STOP_DURATION_THRESHOLDS};
pub use ingest::{ingest_traces, IngestStats};
pub use segments::{extract_edge_segments, EdgeSegment};
pub use store::{query_experience, ExperienceAggregates, SegmentStore};
pub use trace::{dedupe, read_traces, write_traces, TraceReadReport, VehicleLocation};
pub use tracker::{match_location, MatchedLocation, StopVisit, UnmatchedRecord, VehicleDayTrack, VehicleTracker, GEOFENCE_RADIUS_M};

#[derive(Debug, Error)]
pub enum VehicleFlowError {
    #[error("query period start {from} is after its end {to}")]
    InvalidPeriod { from: Epoch, to: Epoch },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("malformed segment file {path} at row {row}")]
    MalformedSegment { path: PathBuf, row: usize },
}
