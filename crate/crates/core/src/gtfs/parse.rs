use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use csv::StringRecord;

use super::model::{parse_time, Provenance, Route, ServiceCalendar, Stop, StopTime, Timetable, TransitTrip, TripStop, VehicleKind};
use super::GtfsError;
use crate::clock::parse_date;
use crate::geodesy::LatLon;

struct Table {
    file: &'static str,
    columns: HashMap<String, usize>,
    rows: Vec<StringRecord>,
}

impl Table {
    fn read(dir: &Path, file: &'static str, required: bool) -> Result<Option<Table>, GtfsError> {
        let path = dir.join(file);
        if !path.exists() {
            return if required { Err(GtfsError::FeedIncomplete(file)) } else { Ok(None) };
        }
        let handle = File::open(&path).map_err(|source| GtfsError::Io { path: path.clone(), source })?;
        let mut reader = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(handle);
        let headers = reader.headers().map_err(|source| GtfsError::Csv { path: path.clone(), source })?.clone();
        let columns = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim_start_matches('\u{feff}').to_string(), i))
            .collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            rows.push(rec.map_err(|source| GtfsError::Csv { path: path.clone(), source })?);
        }
        Ok(Some(Table { file, columns, rows }))
    }

    fn col(&self, name: &str) -> Result<usize, GtfsError> {
        self.columns.get(name).copied().ok_or_else(|| GtfsError::Malformed {
            file: self.file,
            row: 0,
            msg: format!("missing column {name}"),
        })
    }

    fn opt_col(&self, name: &str) -> Option<usize> {
        self.columns.get(name).copied()
    }

    fn get<'a>(&self, rec: &'a StringRecord, col: usize) -> &'a str {
        rec.get(col).unwrap_or("")
    }

    fn malformed(&self, row: usize, msg: impl Into<String>) -> GtfsError {
        GtfsError::Malformed { file: self.file, row, msg: msg.into() }
    }
}

/// Reads a GTFS directory into a validated [`Timetable`].
pub fn parse_gtfs(dir: impl AsRef<Path>) -> Result<Timetable, GtfsError> {
    let dir = dir.as_ref();
    let stops_t = Table::read(dir, "stops.txt", true)?.unwrap();
    let routes_t = Table::read(dir, "routes.txt", true)?.unwrap();
    let trips_t = Table::read(dir, "trips.txt", true)?.unwrap();
    let times_t = Table::read(dir, "stop_times.txt", true)?.unwrap();
    let calendar_t = Table::read(dir, "calendar.txt", false)?;
    let feed_t = Table::read(dir, "feed_info.txt", false)?;

    let routes = parse_routes(&routes_t)?;
    let route_ids: HashMap<&str, usize> = routes.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();

    let services = match &calendar_t {
        Some(t) => parse_calendar(t)?,
        None => Vec::new(),
    };

    // trips
    let id_c = trips_t.col("trip_id")?;
    let route_c = trips_t.col("route_id")?;
    let service_c = trips_t.col("service_id")?;
    let block_c = trips_t.opt_col("block_id");
    let mut trips = Vec::with_capacity(trips_t.rows.len());
    let mut trip_ids: HashMap<String, usize> = HashMap::new();
    for (i, rec) in trips_t.rows.iter().enumerate() {
        let route_id = trips_t.get(rec, route_c);
        if !route_ids.contains_key(route_id) {
            return Err(GtfsError::ReferentialError { file: "trips.txt", row: i + 1 });
        }
        let service_id = trips_t.get(rec, service_c).to_string();
        if !services.is_empty() && !services.iter().any(|(s, _)| *s == service_id) {
            return Err(GtfsError::ReferentialError { file: "trips.txt", row: i + 1 });
        }
        let id = trips_t.get(rec, id_c).to_string();
        trip_ids.insert(id.clone(), trips.len());
        let block_id = block_c.map(|c| trips_t.get(rec, c)).filter(|b| !b.is_empty()).map(str::to_string);
        trips.push(TransitTrip { id, route_id: route_id.to_string(), service_id, block_id, stop_times: Vec::new() });
    }

    // stops: ids first so stop_times can be validated before kinds are known
    let stop_id_c = stops_t.col("stop_id")?;
    let stop_ids: HashMap<String, usize> = stops_t
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| (stops_t.get(r, stop_id_c).to_string(), i))
        .collect();

    let tid_c = times_t.col("trip_id")?;
    let sid_c = times_t.col("stop_id")?;
    let arr_c = times_t.col("arrival_time")?;
    let dep_c = times_t.col("departure_time")?;
    let seq_c = times_t.col("stop_sequence")?;
    for (i, rec) in times_t.rows.iter().enumerate() {
        let row = i + 1;
        let Some(&ti) = trip_ids.get(times_t.get(rec, tid_c)) else {
            return Err(GtfsError::ReferentialError { file: "stop_times.txt", row });
        };
        let stop_id = times_t.get(rec, sid_c);
        if !stop_ids.contains_key(stop_id) {
            return Err(GtfsError::ReferentialError { file: "stop_times.txt", row });
        }
        let arr_s = times_t.get(rec, arr_c);
        let dep_s = times_t.get(rec, dep_c);
        let arrival = if arr_s.is_empty() { parse_time(dep_s) } else { parse_time(arr_s) };
        let departure = if dep_s.is_empty() { parse_time(arr_s) } else { parse_time(dep_s) };
        let (Some(arrival), Some(departure)) = (arrival, departure) else {
            return Err(times_t.malformed(row, "bad time"));
        };
        let sequence: u32 = times_t
            .get(rec, seq_c)
            .parse()
            .map_err(|_| times_t.malformed(row, "bad stop_sequence"))?;
        trips[ti].stop_times.push(TripStop { stop_id: stop_id.to_string(), time: StopTime { arrival, departure, sequence } });
    }
    for trip in &mut trips {
        trip.stop_times.sort_by_key(|s| s.time.sequence);
    }

    let stops = parse_stops(&stops_t, &routes, &trips)?;

    let provenance = match &feed_t {
        Some(t) => parse_provenance(t)?,
        None => Provenance::Planned,
    };

    Timetable::new(stops, routes, trips, services, provenance)
}

fn parse_routes(t: &Table) -> Result<Vec<Route>, GtfsError> {
    let id_c = t.col("route_id")?;
    let short_c = t.opt_col("route_short_name");
    let long_c = t.opt_col("route_long_name");
    let type_c = t.col("route_type")?;
    let mut out = Vec::with_capacity(t.rows.len());
    for (i, rec) in t.rows.iter().enumerate() {
        let code: u16 = t.get(rec, type_c).parse().map_err(|_| t.malformed(i + 1, "bad route_type"))?;
        let kind = VehicleKind::from_route_type(code).ok_or_else(|| t.malformed(i + 1, "unsupported route_type"))?;
        let id = t.get(rec, id_c).to_string();
        let mut short_name = short_c.map(|c| t.get(rec, c).to_string()).unwrap_or_default();
        if short_name.is_empty() {
            short_name = long_c.map(|c| t.get(rec, c).to_string()).unwrap_or_default();
        }
        if short_name.is_empty() {
            short_name = id.clone();
        }
        out.push(Route { id, short_name, kind });
    }
    Ok(out)
}

fn parse_calendar(t: &Table) -> Result<Vec<(String, ServiceCalendar)>, GtfsError> {
    const DAYS: [&str; 7] = ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"];
    let id_c = t.col("service_id")?;
    let day_cols = DAYS.iter().map(|d| t.col(d)).collect::<Result<Vec<_>, _>>()?;
    let start_c = t.col("start_date")?;
    let end_c = t.col("end_date")?;
    let mut out = Vec::with_capacity(t.rows.len());
    for (i, rec) in t.rows.iter().enumerate() {
        let mut weekdays = [false; 7];
        for (k, &c) in day_cols.iter().enumerate() {
            weekdays[k] = match t.get(rec, c) {
                "1" => true,
                "0" | "" => false,
                _ => return Err(t.malformed(i + 1, "weekday flag must be 0 or 1")),
            };
        }
        let start = parse_date(t.get(rec, start_c)).ok_or_else(|| t.malformed(i + 1, "bad start_date"))?;
        let end = parse_date(t.get(rec, end_c)).ok_or_else(|| t.malformed(i + 1, "bad end_date"))?;
        out.push((t.get(rec, id_c).to_string(), ServiceCalendar { weekdays, start, end }));
    }
    Ok(out)
}

fn parse_stops(t: &Table, routes: &[Route], trips: &[TransitTrip]) -> Result<Vec<Stop>, GtfsError> {
    let id_c = t.col("stop_id")?;
    let name_c = t.opt_col("stop_name");
    let lat_c = t.col("stop_lat")?;
    let lon_c = t.col("stop_lon")?;
    let kind_c = t.opt_col("vehicle_type");

    // stops without an explicit kind inherit it from the first route serving them
    let mut served_by: HashMap<&str, VehicleKind> = HashMap::new();
    let route_kind: HashMap<&str, VehicleKind> = routes.iter().map(|r| (r.id.as_str(), r.kind)).collect();
    for trip in trips {
        let kind = route_kind[trip.route_id.as_str()];
        for st in &trip.stop_times {
            served_by.entry(st.stop_id.as_str()).or_insert(kind);
        }
    }

    let mut out = Vec::with_capacity(t.rows.len());
    for (i, rec) in t.rows.iter().enumerate() {
        let id = t.get(rec, id_c).to_string();
        let lat: f64 = t.get(rec, lat_c).parse().map_err(|_| t.malformed(i + 1, "bad stop_lat"))?;
        let lon: f64 = t.get(rec, lon_c).parse().map_err(|_| t.malformed(i + 1, "bad stop_lon"))?;
        let explicit = kind_c.map(|c| t.get(rec, c)).filter(|s| !s.is_empty());
        let kind = match explicit {
            Some(s) => VehicleKind::parse(s).ok_or_else(|| t.malformed(i + 1, "bad vehicle_type"))?,
            None => served_by.get(id.as_str()).copied().unwrap_or(VehicleKind::Bus),
        };
        let name = name_c.map(|c| t.get(rec, c).to_string()).unwrap_or_default();
        out.push(Stop { id, name, pos: LatLon::new(lat, lon), kind });
    }
    Ok(out)
}

fn parse_provenance(t: &Table) -> Result<Provenance, GtfsError> {
    let Some(rec) = t.rows.first() else { return Ok(Provenance::Planned) };
    let version = t.opt_col("feed_version").map(|c| t.get(rec, c)).unwrap_or("");
    if version != "real" {
        return Ok(Provenance::Planned);
    }
    let start = t.col("feed_start_date")?;
    let date = parse_date(t.get(rec, start)).ok_or_else(|| t.malformed(1, "bad feed_start_date"))?;
    Ok(Provenance::Real(date))
}
