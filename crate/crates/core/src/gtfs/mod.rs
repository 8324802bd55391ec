//! GTFS-subset timetables: parsing, writing, frequency expansion and
//! reconstruction of "real" timetables from observed departures.
//!
//! Only `stops`, `routes`, `trips`, `stop_times`, `calendar` and an optional
//! `feed_info` are read or written. Times are seconds since service midnight
//! and may exceed 24 h for trips that run past midnight.

mod frequency;
mod model;
mod parse;
mod real;
mod write;

use std::path::PathBuf;

use thiserror::Error;

pub use frequency::{expand_frequency_service, FrequencyPattern, HeadwayTable};
pub use model::{
    format_time, parse_time, Provenance, Route, ServiceCalendar, ServiceSeconds, Stop, StopTime, Timetable,
    TransitTrip, TripStop, VehicleKind,
};
pub use parse::parse_gtfs;
pub use real::{build_real_timetable, observations_from_segments, observations_from_visits, RealTimetableReport, StopDeparture};
pub use write::{real_gtfs_dir, write_gtfs, write_real_gtfs};

#[derive(Debug, Error)]
pub enum GtfsError {
    #[error("feed incomplete: missing {0}")]
    FeedIncomplete(&'static str),
    #[error("dangling reference in {file} at row {row}")]
    ReferentialError { file: &'static str, row: usize },
    #[error("trip {trip_id} references unknown stop {stop_id}")]
    UnknownStop { trip_id: String, stop_id: String },
    #[error("stop times of trip {0} are not strictly increasing")]
    ScheduleOrderError(String),
    #[error("duplicate id {id} in {file}")]
    DuplicateId { file: &'static str, id: String },
    #[error("invalid coordinates for stop {stop_id}")]
    InvalidCoordinate { stop_id: String },
    #[error("malformed value in {file} at row {row}: {msg}")]
    Malformed { file: &'static str, row: usize, msg: String },
    #[error("headway for hour {hour} must be positive")]
    InvalidHeadway { hour: u8 },
    #[error("no observations for the requested service date")]
    EmptyTraceError,
    #[error("a real timetable must carry exactly one service date")]
    NotSingleDay,
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
}

impl GtfsError {
    /// Referential errors of either flavour.
    pub fn is_referential(&self) -> bool {
        matches!(self, GtfsError::ReferentialError { .. } | GtfsError::UnknownStop { .. })
    }
}
