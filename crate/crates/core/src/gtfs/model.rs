use std::collections::HashMap;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::GtfsError;
use crate::geodesy::LatLon;

/// Seconds since service-day midnight. Values above 86 400 are trips running past midnight.
pub type ServiceSeconds = i32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VehicleKind {
    Bus,
    Tram,
    Metro,
    Rail,
}

impl VehicleKind {
    pub const ALL: [VehicleKind; 4] = [VehicleKind::Bus, VehicleKind::Tram, VehicleKind::Metro, VehicleKind::Rail];

    /// GTFS `route_type` code.
    pub fn route_type(self) -> u16 {
        match self {
            VehicleKind::Tram => 0,
            VehicleKind::Metro => 1,
            VehicleKind::Rail => 2,
            VehicleKind::Bus => 3,
        }
    }

    pub fn from_route_type(code: u16) -> Option<Self> {
        match code {
            0 | 900..=999 => Some(VehicleKind::Tram),
            1 | 400..=499 => Some(VehicleKind::Metro),
            2 | 100..=199 => Some(VehicleKind::Rail),
            3 | 700..=799 => Some(VehicleKind::Bus),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VehicleKind::Bus => "bus",
            VehicleKind::Tram => "tram",
            VehicleKind::Metro => "metro",
            VehicleKind::Rail => "rail",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bus" => Some(VehicleKind::Bus),
            "tram" => Some(VehicleKind::Tram),
            "metro" | "subway" => Some(VehicleKind::Metro),
            "rail" | "train" => Some(VehicleKind::Rail),
            _ => None,
        }
    }

    /// Capitalised label used in feature names.
    pub fn feature_label(self) -> &'static str {
        match self {
            VehicleKind::Bus => "Bus",
            VehicleKind::Tram => "Tram",
            VehicleKind::Metro => "Subway",
            VehicleKind::Rail => "Rail",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stop {
    pub id: String,
    pub name: String,
    pub pos: LatLon,
    pub kind: VehicleKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub id: String,
    /// Public line number.
    pub short_name: String,
    pub kind: VehicleKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopTime {
    pub arrival: ServiceSeconds,
    pub departure: ServiceSeconds,
    pub sequence: u32,
}

/// Stop-time rows are held per trip; the stop id lives next to the times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripStop {
    pub stop_id: String,
    #[serde(flatten)]
    pub time: StopTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitTrip {
    pub id: String,
    pub route_id: String,
    pub service_id: String,
    /// Vehicle brigade; GTFS `block_id`.
    pub block_id: Option<String>,
    pub stop_times: Vec<TripStop>,
}

impl TransitTrip {
    pub fn first_departure(&self) -> Option<ServiceSeconds> {
        self.stop_times.first().map(|s| s.time.departure)
    }

    pub fn last_arrival(&self) -> Option<ServiceSeconds> {
        self.stop_times.last().map(|s| s.time.arrival)
    }

    pub fn duration(&self) -> Option<ServiceSeconds> {
        Some(self.last_arrival()? - self.first_departure()?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceCalendar {
    /// Monday first.
    pub weekdays: [bool; 7],
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl ServiceCalendar {
    pub fn single_day(date: NaiveDate) -> Self {
        let mut weekdays = [false; 7];
        weekdays[date.weekday().num_days_from_monday() as usize] = true;
        Self { weekdays, start: date, end: date }
    }

    pub fn runs_on(&self, date: NaiveDate) -> bool {
        date >= self.start && date <= self.end && self.weekdays[date.weekday().num_days_from_monday() as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Planned,
    Real(NaiveDate),
}

/// A planned or reconstructed transit schedule. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Timetable {
    pub stops: Vec<Stop>,
    pub routes: Vec<Route>,
    pub trips: Vec<TransitTrip>,
    /// Calendar per service id, in file order. Empty means every service runs daily.
    pub services: Vec<(String, ServiceCalendar)>,
    pub provenance: Provenance,
    stop_index: HashMap<String, usize>,
    route_index: HashMap<String, usize>,
    trip_index: HashMap<String, usize>,
}

impl Timetable {
    /// Builds a timetable and checks every invariant.
    pub fn new(
        stops: Vec<Stop>,
        routes: Vec<Route>,
        trips: Vec<TransitTrip>,
        services: Vec<(String, ServiceCalendar)>,
        provenance: Provenance,
    ) -> Result<Self, GtfsError> {
        let mut stop_index = HashMap::with_capacity(stops.len());
        for (i, s) in stops.iter().enumerate() {
            if !s.pos.is_valid() {
                return Err(GtfsError::InvalidCoordinate { stop_id: s.id.clone() });
            }
            if stop_index.insert(s.id.clone(), i).is_some() {
                return Err(GtfsError::DuplicateId { file: "stops.txt", id: s.id.clone() });
            }
        }
        let mut route_index = HashMap::with_capacity(routes.len());
        for (i, r) in routes.iter().enumerate() {
            if route_index.insert(r.id.clone(), i).is_some() {
                return Err(GtfsError::DuplicateId { file: "routes.txt", id: r.id.clone() });
            }
        }
        let service_ids: HashMap<&str, ()> = services.iter().map(|(id, _)| (id.as_str(), ())).collect();
        if let Provenance::Real(date) = provenance {
            let all_single = services.iter().all(|(_, c)| c.start == date && c.end == date);
            if services.is_empty() || !all_single {
                return Err(GtfsError::NotSingleDay);
            }
        }
        let mut trip_index = HashMap::with_capacity(trips.len());
        for (i, t) in trips.iter().enumerate() {
            if trip_index.insert(t.id.clone(), i).is_some() {
                return Err(GtfsError::DuplicateId { file: "trips.txt", id: t.id.clone() });
            }
            if !route_index.contains_key(&t.route_id) {
                return Err(GtfsError::ReferentialError { file: "trips.txt", row: i + 1 });
            }
            if !services.is_empty() && !service_ids.contains_key(t.service_id.as_str()) {
                return Err(GtfsError::ReferentialError { file: "trips.txt", row: i + 1 });
            }
            let mut prev_dep: Option<ServiceSeconds> = None;
            let mut prev_seq: Option<u32> = None;
            for st in &t.stop_times {
                if !stop_index.contains_key(&st.stop_id) {
                    return Err(GtfsError::UnknownStop { trip_id: t.id.clone(), stop_id: st.stop_id.clone() });
                }
                if st.time.arrival > st.time.departure {
                    return Err(GtfsError::ScheduleOrderError(t.id.clone()));
                }
                if prev_dep.is_some_and(|p| st.time.departure <= p) || prev_seq.is_some_and(|p| st.time.sequence <= p) {
                    return Err(GtfsError::ScheduleOrderError(t.id.clone()));
                }
                prev_dep = Some(st.time.departure);
                prev_seq = Some(st.time.sequence);
            }
        }
        Ok(Self { stops, routes, trips, services, provenance, stop_index, route_index, trip_index })
    }

    pub fn stop(&self, id: &str) -> Option<&Stop> {
        self.stop_index.get(id).map(|&i| &self.stops[i])
    }

    pub fn stop_idx(&self, id: &str) -> Option<usize> {
        self.stop_index.get(id).copied()
    }

    pub fn route(&self, id: &str) -> Option<&Route> {
        self.route_index.get(id).map(|&i| &self.routes[i])
    }

    pub fn trip(&self, id: &str) -> Option<&TransitTrip> {
        self.trip_index.get(id).map(|&i| &self.trips[i])
    }

    pub fn route_of(&self, trip: &TransitTrip) -> &Route {
        &self.routes[self.route_index[&trip.route_id]]
    }

    pub fn runs_on(&self, service_id: &str, date: NaiveDate) -> bool {
        if self.services.is_empty() {
            return true;
        }
        self.services
            .iter()
            .find(|(id, _)| id == service_id)
            .is_some_and(|(_, c)| c.runs_on(date))
    }

    /// Trips operating on `date`.
    pub fn trips_on(&self, date: NaiveDate) -> impl Iterator<Item = &TransitTrip> {
        self.trips.iter().filter(move |t| self.runs_on(&t.service_id, date))
    }

    pub fn service_date(&self) -> Option<NaiveDate> {
        match self.provenance {
            Provenance::Real(d) => Some(d),
            Provenance::Planned => None,
        }
    }
}

/// Formats service seconds as `HH:MM:SS`, hours may exceed 23.
pub fn format_time(s: ServiceSeconds) -> String {
    let sign = if s < 0 { "-" } else { "" };
    let s = s.abs();
    format!("{sign}{:02}:{:02}:{:02}", s / 3600, (s / 60) % 60, s % 60)
}

pub fn parse_time(s: &str) -> Option<ServiceSeconds> {
    let mut parts = s.trim().split(':');
    let h: i32 = parts.next()?.trim().parse().ok()?;
    let m: i32 = parts.next()?.parse().ok()?;
    let sec: i32 = parts.next()?.parse().ok()?;
    if parts.next().is_some() || !(0..60).contains(&m) || !(0..60).contains(&sec) || h < 0 {
        return None;
    }
    Some(h * 3600 + m * 60 + sec)
}
