use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::events::STOP_DURATION_THRESHOLDS;
use super::segments::EdgeSegment;
use super::VehicleFlowError;
use crate::clock::{format_date, parse_date, Epoch};

const INDEX_FILE: &str = "index.csv";

fn header() -> Vec<String> {
    let mut h: Vec<String> = [
        "vehicle_id",
        "line",
        "trip_id",
        "from_stop",
        "to_stop",
        "from_seq",
        "to_seq",
        "departure_from",
        "departure_to",
        "delay_from",
        "delay_to",
        "avg_speed_mps",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for t in STOP_DURATION_THRESHOLDS {
        h.push(format!("below_{t}"));
        h.push(format!("at_or_above_{t}"));
    }
    h
}

fn row(s: &EdgeSegment) -> Vec<String> {
    let mut r = vec![
        s.vehicle_id.clone(),
        s.line.clone(),
        s.trip_id.clone(),
        s.from_stop.clone(),
        s.to_stop.clone(),
        s.from_seq.to_string(),
        s.to_seq.to_string(),
        s.departure_from.to_string(),
        s.departure_to.to_string(),
        s.delay_from.to_string(),
        s.delay_to.to_string(),
        s.avg_speed_mps.to_string(),
    ];
    for i in 0..4 {
        r.push(s.below[i].to_string());
        r.push(s.at_or_above[i].to_string());
    }
    r
}

fn parse_row(rec: &csv::StringRecord, date: NaiveDate) -> Option<EdgeSegment> {
    let f = |i: usize| rec.get(i);
    let mut below = [0; 4];
    let mut at_or_above = [0; 4];
    for i in 0..4 {
        below[i] = f(12 + 2 * i)?.parse().ok()?;
        at_or_above[i] = f(13 + 2 * i)?.parse().ok()?;
    }
    Some(EdgeSegment {
        service_date: date,
        vehicle_id: f(0)?.to_string(),
        line: f(1)?.to_string(),
        trip_id: f(2)?.to_string(),
        from_stop: f(3)?.to_string(),
        to_stop: f(4)?.to_string(),
        from_seq: f(5)?.parse().ok()?,
        to_seq: f(6)?.parse().ok()?,
        departure_from: f(7)?.parse().ok()?,
        departure_to: f(8)?.parse().ok()?,
        delay_from: f(9)?.parse().ok()?,
        delay_to: f(10)?.parse().ok()?,
        avg_speed_mps: f(11)?.parse().ok()?,
        below,
        at_or_above,
    })
}

fn file_name(line: &str) -> String {
    let safe: String = line.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    format!("{safe}.csv")
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> VehicleFlowError + '_ {
    move |source| VehicleFlowError::Csv { path: path.to_path_buf(), source }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> VehicleFlowError + '_ {
    move |source| VehicleFlowError::Io { path: path.to_path_buf(), source }
}

fn sort_key(s: &EdgeSegment) -> (Epoch, &str, &str, u32) {
    (s.departure_from, s.vehicle_id.as_str(), s.trip_id.as_str(), s.from_seq)
}

/// Segments partitioned by service date, persisted as
/// `<root>/<YYYY-MM-DD>/<line>.csv` with a per-date `index.csv`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SegmentStore {
    by_date: BTreeMap<NaiveDate, Vec<EdgeSegment>>,
}

impl SegmentStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_segments(segments: impl IntoIterator<Item = EdgeSegment>) -> Self {
        let mut store = Self::new();
        for s in segments {
            store.by_date.entry(s.service_date).or_default().push(s);
        }
        for v in store.by_date.values_mut() {
            v.sort_by(|a, b| sort_key(a).cmp(&sort_key(b)));
        }
        store
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.by_date.keys().copied()
    }

    pub fn segments_on(&self, date: NaiveDate) -> &[EdgeSegment] {
        self.by_date.get(&date).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = &EdgeSegment> {
        self.by_date.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.by_date.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes every date partition held, replacing whatever was stored for those dates.
    pub fn write(&self, root: impl AsRef<Path>) -> Result<(), VehicleFlowError> {
        let root = root.as_ref();
        for (date, segments) in &self.by_date {
            let dir = root.join(format_date(*date));
            if dir.exists() {
                fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
            }
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            let mut by_line: BTreeMap<&str, Vec<&EdgeSegment>> = BTreeMap::new();
            for s in segments {
                by_line.entry(s.line.as_str()).or_default().push(s);
            }
            let index_path = dir.join(INDEX_FILE);
            let mut index = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_path(&index_path)
                .map_err(csv_err(&index_path))?;
            index.write_record(["line", "file", "rows", "first_departure", "last_departure"]).map_err(csv_err(&index_path))?;
            for (line, rows) in by_line {
                let name = file_name(line);
                let path = dir.join(&name);
                let mut w =
                    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(&path).map_err(csv_err(&path))?;
                w.write_record(header()).map_err(csv_err(&path))?;
                for s in &rows {
                    w.write_record(row(s)).map_err(csv_err(&path))?;
                }
                w.flush().map_err(io_err(&path))?;
                let first = rows.iter().map(|s| s.departure_from).min().unwrap_or(0);
                let last = rows.iter().map(|s| s.departure_from).max().unwrap_or(0);
                index
                    .write_record([line.to_string(), name, rows.len().to_string(), first.to_string(), last.to_string()])
                    .map_err(csv_err(&index_path))?;
            }
            index.flush().map_err(io_err(&index_path))?;
        }
        Ok(())
    }

    /// Loads the given dates; a date without a partition contributes nothing.
    pub fn open_dates(root: impl AsRef<Path>, dates: &[NaiveDate]) -> Result<Self, VehicleFlowError> {
        let root = root.as_ref();
        let mut store = Self::new();
        for &date in dates {
            let dir = root.join(format_date(date));
            let index_path = dir.join(INDEX_FILE);
            if !index_path.exists() {
                continue;
            }
            let mut idx = csv::Reader::from_path(&index_path).map_err(csv_err(&index_path))?;
            let mut segments = Vec::new();
            for rec in idx.records() {
                let rec = rec.map_err(csv_err(&index_path))?;
                let path: PathBuf = dir.join(rec.get(1).unwrap_or_default());
                let mut rdr = csv::Reader::from_path(&path).map_err(csv_err(&path))?;
                for (i, r) in rdr.records().enumerate() {
                    let r = r.map_err(csv_err(&path))?;
                    let seg = parse_row(&r, date).ok_or(VehicleFlowError::MalformedSegment { path: path.clone(), row: i + 2 })?;
                    segments.push(seg);
                }
            }
            segments.sort_by(|a, b| sort_key(a).cmp(&sort_key(b)));
            store.by_date.insert(date, segments);
        }
        Ok(store)
    }

    /// Loads every date partition found under `root`.
    pub fn open(root: impl AsRef<Path>) -> Result<Self, VehicleFlowError> {
        let root = root.as_ref();
        let mut dates = Vec::new();
        if root.exists() {
            for entry in fs::read_dir(root).map_err(io_err(root))? {
                let entry = entry.map_err(io_err(root))?;
                if let Some(d) = entry.file_name().to_str().and_then(parse_date) {
                    dates.push(d);
                }
            }
        }
        dates.sort();
        Self::open_dates(root, &dates)
    }
}

/// Delay, speed and stopping-event aggregates over matching segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperienceAggregates {
    pub segments: usize,
    pub avg_delay_s: f64,
    pub max_delay_s: f64,
    pub avg_speed_mps: f64,
    pub below: [f64; 4],
    pub at_or_above: [f64; 4],
    pub has_experience: bool,
}

impl ExperienceAggregates {
    pub fn sentinel(value: f64) -> Self {
        Self {
            segments: 0,
            avg_delay_s: value,
            max_delay_s: value,
            avg_speed_mps: value,
            below: [value; 4],
            at_or_above: [value; 4],
            has_experience: false,
        }
    }

    /// Quantities in feature order, named without suffix.
    pub fn named_values(&self) -> Vec<(String, f64)> {
        let mut v = vec![
            ("avgCurrentStopDelay".to_string(), self.avg_delay_s),
            ("maxCurrentStopDelay".to_string(), self.max_delay_s),
            ("avgSpeed".to_string(), self.avg_speed_mps),
        ];
        for (i, t) in STOP_DURATION_THRESHOLDS.iter().enumerate() {
            v.push((format!("stopEventsShorterThan{t}s"), self.below[i]));
            v.push((format!("stopEventsAtLeast{t}s"), self.at_or_above[i]));
        }
        v
    }
}

/// Aggregates segments whose line is in `lines`, stop pair is in `edges`
/// and departure from the first stop lies in `period` (inclusive).
pub fn query_experience(
    store: &SegmentStore,
    edges: &[(String, String)],
    lines: &[String],
    period: (Epoch, Epoch),
    sentinel: f64,
) -> Result<ExperienceAggregates, VehicleFlowError> {
    let (from, to) = period;
    if from > to {
        return Err(VehicleFlowError::InvalidPeriod { from, to });
    }
    let edge_set: HashSet<(&str, &str)> = edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let line_set: BTreeSet<&str> = lines.iter().map(String::as_str).collect();
    let matching: Vec<&EdgeSegment> = store
        .iter()
        .filter(|s| s.departure_from >= from && s.departure_from <= to)
        .filter(|s| line_set.contains(s.line.as_str()) && edge_set.contains(&(s.from_stop.as_str(), s.to_stop.as_str())))
        .collect();
    if matching.is_empty() {
        return Ok(ExperienceAggregates::sentinel(sentinel));
    }
    let n = matching.len() as f64;
    let mut below = [0.0; 4];
    let mut at_or_above = [0.0; 4];
    for s in &matching {
        for i in 0..4 {
            below[i] += s.below[i] as f64;
            at_or_above[i] += s.at_or_above[i] as f64;
        }
    }
    Ok(ExperienceAggregates {
        segments: matching.len(),
        avg_delay_s: matching.iter().map(|s| s.delay_from as f64).sum::<f64>() / n,
        max_delay_s: matching.iter().map(|s| s.delay_from as f64).fold(f64::MIN, f64::max),
        avg_speed_mps: matching.iter().map(|s| s.avg_speed_mps).sum::<f64>() / n,
        below,
        at_or_above,
        has_experience: true,
    })
}
