use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::FusionError;
use crate::clock::{Epoch, ServiceClock};
use crate::geodesy::LatLon;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TravelMode {
    Car,
    Pt,
    Walk,
    Bike,
}

impl TravelMode {
    pub const ALL: [TravelMode; 4] = [TravelMode::Car, TravelMode::Pt, TravelMode::Walk, TravelMode::Bike];

    pub fn as_str(self) -> &'static str {
        match self {
            TravelMode::Car => "car",
            TravelMode::Pt => "pt",
            TravelMode::Walk => "walk",
            TravelMode::Bike => "bike",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
    }
}

/// One reported trip of a respondent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    pub respondent_id: String,
    /// Position of the trip block in the respondent's row, from 1.
    pub ordinal: u32,
    pub origin: LatLon,
    pub destination: LatLon,
    pub departure: Epoch,
    pub arrival: Option<Epoch>,
    pub mode: TravelMode,
    /// Survey answers aligned with [`Survey::answer_columns`]; empty when unanswered.
    pub answers: Vec<String>,
    pub home: Option<LatLon>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Survey {
    /// Person-level answer columns in header order, then trip-level answers.
    pub answer_columns: Vec<String>,
    pub trips: Vec<Trip>,
    pub respondents: usize,
    pub skipped_trips: usize,
}

const FIXED: [&str; 3] = ["respondent_id", "home_lat", "home_lon"];
const TRIP_CORE: [&str; 7] = ["o_lat", "o_lon", "d_lat", "d_lon", "departure", "arrival", "mode"];

/// Splits `trip{n}_{field}` into `(n, field)`.
fn trip_column(name: &str) -> Option<(u32, &str)> {
    let rest = name.strip_prefix("trip")?;
    let (n, field) = rest.split_once('_')?;
    let n: u32 = n.parse().ok()?;
    (n > 0 && !field.is_empty()).then_some((n, field))
}

pub fn parse_local_datetime(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

fn coord(lat: &str, lon: &str) -> Option<LatLon> {
    let p = LatLon::new(lat.trim().parse().ok()?, lon.trim().parse().ok()?);
    p.is_valid().then_some(p)
}

/// Expands one-row-per-respondent survey records into trips.
/// Blocks with every field empty are absent trips; blocks with missing or
/// invalid core fields are skipped and counted.
pub fn extract_trips(path: impl AsRef<Path>, clock: &ServiceClock) -> Result<Survey, FusionError> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| FusionError::Survey { path: path.to_path_buf(), message: e.to_string() })?;
    let header = rdr.headers().map_err(|e| FusionError::Survey { path: path.to_path_buf(), message: e.to_string() })?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let id_col = col("respondent_id").ok_or_else(|| FusionError::Survey { path: path.to_path_buf(), message: "missing respondent_id column".into() })?;
    let home_cols = col("home_lat").zip(col("home_lon"));

    let mut person_cols = Vec::new();
    let mut trip_extra: Vec<String> = Vec::new();
    let mut blocks: BTreeMap<u32, BTreeMap<String, usize>> = BTreeMap::new();
    for (i, h) in header.iter().enumerate() {
        if FIXED.contains(&h) {
            continue;
        }
        match trip_column(h) {
            Some((n, field)) => {
                if !TRIP_CORE.contains(&field) && !trip_extra.iter().any(|x| x == field) {
                    trip_extra.push(field.to_string());
                }
                blocks.entry(n).or_default().insert(field.to_string(), i);
            }
            None => person_cols.push((h.to_string(), i)),
        }
    }
    let mut answer_columns: Vec<String> = person_cols.iter().map(|(h, _)| h.clone()).collect();
    answer_columns.extend(trip_extra.iter().cloned());

    let mut survey = Survey { answer_columns, ..Default::default() };
    for rec in rdr.records() {
        let rec = rec.map_err(|e| FusionError::Survey { path: path.to_path_buf(), message: e.to_string() })?;
        let respondent_id = rec.get(id_col).unwrap_or_default().trim().to_string();
        if respondent_id.is_empty() {
            survey.skipped_trips += blocks.len();
            continue;
        }
        survey.respondents += 1;
        let home = home_cols.and_then(|(a, b)| coord(rec.get(a)?, rec.get(b)?));
        let person: Vec<String> = person_cols.iter().map(|(_, i)| rec.get(*i).unwrap_or_default().trim().to_string()).collect();
        for (&n, fields) in &blocks {
            let get = |f: &str| fields.get(f).and_then(|&i| rec.get(i)).map(str::trim).unwrap_or("");
            if fields.values().all(|&i| rec.get(i).is_none_or(|v| v.trim().is_empty())) {
                continue;
            }
            let trip = (|| {
                let origin = coord(get("o_lat"), get("o_lon"))?;
                let destination = coord(get("d_lat"), get("d_lon"))?;
                let departure = clock.epoch_of(parse_local_datetime(get("departure"))?);
                let arrival = match get("arrival") {
                    "" => None,
                    s => Some(clock.epoch_of(parse_local_datetime(s)?)),
                };
                if arrival.is_some_and(|a| a <= departure) {
                    return None;
                }
                let mode = TravelMode::parse(get("mode"))?;
                let mut answers = person.clone();
                answers.extend(trip_extra.iter().map(|f| get(f).to_string()));
                Some(Trip { respondent_id: respondent_id.clone(), ordinal: n, origin, destination, departure, arrival, mode, answers, home })
            })();
            match trip {
                Some(t) => survey.trips.push(t),
                None => survey.skipped_trips += 1,
            }
        }
    }
    Ok(survey)
}

/// Stable ascending sort by departure, ties by respondent and ordinal.
pub fn sort_trips(trips: &mut [Trip]) {
    trips.sort_by(|a, b| a.departure.cmp(&b.departure).then_with(|| a.respondent_id.cmp(&b.respondent_id)).then_with(|| a.ordinal.cmp(&b.ordinal)));
}

/// Writes survey records in the layout read by [`extract_trips`].
pub fn write_survey(
    path: impl AsRef<Path>,
    person_columns: &[String],
    trip_columns: &[String],
    rows: &[SurveyRow],
    max_trips: usize,
) -> Result<(), FusionError> {
    let path = path.as_ref();
    let err = |e: csv::Error| FusionError::Survey { path: path.to_path_buf(), message: e.to_string() };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    let mut header: Vec<String> = FIXED.iter().map(|s| s.to_string()).collect();
    header.extend(person_columns.iter().cloned());
    for n in 1..=max_trips {
        for f in TRIP_CORE.iter().map(|s| s.to_string()).chain(trip_columns.iter().cloned()) {
            header.push(format!("trip{n}_{f}"));
        }
    }
    w.write_record(&header).map_err(err)?;
    for r in rows {
        let mut rec = vec![r.respondent_id.clone()];
        match r.home {
            Some(h) => rec.extend([format!("{:.6}", h.lat), format!("{:.6}", h.lon)]),
            None => rec.extend([String::new(), String::new()]),
        }
        rec.extend(r.person.iter().cloned());
        for n in 0..max_trips {
            match r.trips.get(n) {
                Some(t) => {
                    rec.extend([
                        format!("{:.6}", t.origin.lat),
                        format!("{:.6}", t.origin.lon),
                        format!("{:.6}", t.destination.lat),
                        format!("{:.6}", t.destination.lon),
                        t.departure_local.clone(),
                        t.arrival_local.clone().unwrap_or_default(),
                        t.mode.as_str().to_string(),
                    ]);
                    rec.extend(t.answers.iter().cloned());
                }
                None => rec.extend(std::iter::repeat_n(String::new(), TRIP_CORE.len() + trip_columns.len())),
            }
        }
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| FusionError::Io { path: path.to_path_buf(), source: e })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurveyRow {
    pub respondent_id: String,
    pub home: Option<LatLon>,
    pub person: Vec<String>,
    pub trips: Vec<SurveyTrip>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurveyTrip {
    pub origin: LatLon,
    pub destination: LatLon,
    pub departure_local: String,
    pub arrival_local: Option<String>,
    pub mode: TravelMode,
    pub answers: Vec<String>,
}
