use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::kinematics::{sample_trace, Halt, Waypoint};
use super::network::{grid_street_graph, GridSpec};
use crate::car_model::{MatrixKind, ZoneMatrices, ZoneSet};
use crate::clock::{format_date, preceding_working_day, Epoch, ServiceClock};
use crate::config::RunConfig;
use crate::env_features::{EnvParameter, SensorSeries, SensorStore};
use crate::fusion::{write_survey, SurveyRow, SurveyTrip, TravelMode};
use crate::geodesy::{haversine_m, LatLon};
use crate::geojson::{write_features, Feature, Geometry};
use crate::gtfs::{
    expand_frequency_service, parse_gtfs, write_gtfs, FrequencyPattern, HeadwayTable, Provenance, Route, ServiceCalendar, Stop, StopTime, Timetable,
    TransitTrip, TripStop, VehicleKind,
};
use crate::router::{route_unimodal, StreetGraph, StreetMode, TransitNetwork};
use crate::vehicle_flow::{write_traces, VehicleLocation};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid city spec: {0}")]
    Config(String),
    #[error("cannot write fixture {path}: {message}")]
    Write { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub rows: usize,
    pub cols: usize,
    pub spacing_m: f64,
    pub arterial_every: usize,
    pub origin_lat: f64,
    pub origin_lon: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { rows: 12, cols: 12, spacing_m: 300.0, arterial_every: 4, origin_lat: 52.2, origin_lon: 21.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransitConfig {
    /// Traced bus and tram lines, at most four.
    pub surface_lines: usize,
    /// Metro line expanded from an hourly headway table.
    pub metro: bool,
    pub first_departure_h: u8,
    pub last_departure_h: u8,
    pub headway_s: i32,
    pub metro_headway_s: i32,
    pub layover_s: i32,
    pub stop_every: usize,
    pub dwell_s: i32,
    pub bus_speed_mps: f64,
    pub tram_speed_mps: f64,
    pub metro_speed_mps: f64,
}

impl Default for TransitConfig {
    fn default() -> Self {
        Self {
            surface_lines: 4,
            metro: true,
            first_departure_h: 6,
            last_departure_h: 20,
            headway_s: 600,
            metro_headway_s: 300,
            layover_s: 600,
            stop_every: 2,
            dwell_s: 20,
            bus_speed_mps: 7.0,
            tram_speed_mps: 6.0,
            metro_speed_mps: 12.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceConfig {
    pub cadence_s: i64,
    pub delay_mean_s: f64,
    pub delay_sd_s: f64,
    pub halt_probability: f64,
    pub halt_mean_s: f64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self { cadence_s: 5, delay_mean_s: 120.0, delay_sd_s: 30.0, halt_probability: 0.2, halt_mean_s: 40.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurveyConfig {
    pub respondents: usize,
    pub first_date: NaiveDate,
    /// Number of Monday-to-Friday survey days from `first_date`.
    pub weekdays: usize,
    pub max_trips: usize,
    /// Share of trips ending within walking range of their origin.
    pub short_trip_share: f64,
    /// Probability that a label is replaced by a different mode.
    pub noise: f64,
}

impl Default for SurveyConfig {
    fn default() -> Self {
        Self {
            respondents: 100,
            first_date: NaiveDate::from_ymd_opt(2023, 5, 8).unwrap(),
            weekdays: 10,
            max_trips: 4,
            short_trip_share: 0.3,
            noise: 0.0,
        }
    }
}

/// Ground-truth mode choice over level-of-service values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModeRule {
    pub walk_max_m: f64,
    /// Transit is chosen by car users when car duration / fastest transit duration reaches this.
    pub car_transit_ratio: f64,
    pub bike_max_m: f64,
}

impl Default for ModeRule {
    fn default() -> Self {
        Self { walk_max_m: 1000.0, car_transit_ratio: 0.55, bike_max_m: 4000.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleInputs {
    pub walk_distance_m: Option<f64>,
    pub car_duration_s: Option<f64>,
    pub min_transit_s: Option<f64>,
    pub car_available: bool,
    pub bike_owner: bool,
}

impl ModeRule {
    pub fn decide(&self, x: &RuleInputs) -> TravelMode {
        let walk = x.walk_distance_m.unwrap_or(f64::INFINITY);
        if walk <= self.walk_max_m {
            return TravelMode::Walk;
        }
        let car = x.car_available && x.car_duration_s.is_some();
        if let Some(pt) = x.min_transit_s {
            let competitive = match x.car_duration_s {
                Some(c) if pt > 0.0 => c / pt >= self.car_transit_ratio,
                _ => true,
            };
            if !car || competitive {
                return TravelMode::Pt;
            }
        }
        if car {
            return TravelMode::Car;
        }
        if x.bike_owner && walk <= self.bike_max_m {
            return TravelMode::Bike;
        }
        if x.min_transit_s.is_some() {
            TravelMode::Pt
        } else {
            TravelMode::Walk
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CitySpec {
    pub seed: u64,
    pub utc_offset_s: i32,
    pub grid: GridConfig,
    pub transit: TransitConfig,
    pub traces: TraceConfig,
    pub survey: SurveyConfig,
    pub rule: ModeRule,
}

impl Default for CitySpec {
    fn default() -> Self {
        Self {
            seed: 1,
            utc_offset_s: 7200,
            grid: GridConfig::default(),
            transit: TransitConfig::default(),
            traces: TraceConfig::default(),
            survey: SurveyConfig::default(),
            rule: ModeRule::default(),
        }
    }
}

impl CitySpec {
    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        let spec: CitySpec = toml::from_str(text).map_err(|e| SynthError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Config(m.to_string()));
        let g = &self.grid;
        let t = &self.transit;
        if g.rows < 4 || g.cols < 4 || !(g.spacing_m > 0.0) {
            return bad("grid needs at least 4x4 nodes and positive spacing");
        }
        if t.surface_lines > 4 {
            return bad("at most four surface lines");
        }
        if t.headway_s <= 0 || t.metro_headway_s <= 0 || t.layover_s < 0 || t.dwell_s < 0 || t.stop_every == 0 {
            return bad("headways must be positive, layover and dwell non-negative, stop_every at least 1");
        }
        if t.first_departure_h > t.last_departure_h || t.last_departure_h > 23 {
            return bad("departure hours must satisfy first <= last <= 23");
        }
        if !(t.bus_speed_mps > 0.0 && t.tram_speed_mps > 0.0 && t.metro_speed_mps > 0.0) {
            return bad("vehicle speeds must be positive");
        }
        let tr = &self.traces;
        if tr.cadence_s <= 0 || tr.delay_sd_s < 0.0 || !(0.0..=1.0).contains(&tr.halt_probability) || tr.halt_mean_s <= 0.0 {
            return bad("trace cadence, delay spread and halt settings are out of range");
        }
        if tr.delay_mean_s.abs() + 4.0 * tr.delay_sd_s >= t.layover_s as f64 + 1.0 && t.layover_s > 0 {
            return bad("layover must exceed the delay range so block trips stay ordered");
        }
        let s = &self.survey;
        if s.respondents == 0 || s.weekdays == 0 || s.max_trips == 0 {
            return bad("survey needs respondents, days and trips");
        }
        if !(0.0..=1.0).contains(&s.noise) || !(0.0..=1.0).contains(&s.short_trip_share) {
            return bad("noise and short_trip_share must lie in [0, 1]");
        }
        let r = &self.rule;
        if !(r.walk_max_m >= 0.0 && r.bike_max_m >= 0.0 && r.car_transit_ratio > 0.0) {
            return bad("mode rule thresholds must be positive");
        }
        Ok(())
    }

    fn grid_spec(&self) -> GridSpec {
        GridSpec { rows: self.grid.rows, cols: self.grid.cols, spacing_m: self.grid.spacing_m, origin: LatLon::new(self.grid.origin_lat, self.grid.origin_lon) }
    }

    pub fn survey_dates(&self) -> Vec<NaiveDate> {
        let mut out = Vec::new();
        let mut d = self.survey.first_date;
        while out.len() < self.survey.weekdays {
            if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
                out.push(d);
            }
            d += Duration::days(1);
        }
        out
    }

    pub fn trace_dates(&self) -> Vec<NaiveDate> {
        let set: BTreeSet<NaiveDate> = self.survey_dates().into_iter().map(preceding_working_day).collect();
        set.into_iter().collect()
    }
}

/// What was generated, for bookkeeping and closure checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityReport {
    pub stops: usize,
    pub trips: usize,
    pub trace_records: usize,
    pub trace_dates: Vec<NaiveDate>,
    pub survey_dates: Vec<NaiveDate>,
    pub respondents: usize,
    pub survey_trips: usize,
    pub injected_delays: usize,
    pub mean_injected_delay_s: f64,
    pub label_counts: BTreeMap<String, usize>,
}

fn write_err(path: &Path) -> impl Fn(&dyn std::fmt::Display) -> SynthError + '_ {
    move |e| SynthError::Write { path: path.to_path_buf(), message: e.to_string() }
}

struct LineLayout {
    route: Route,
    nodes: Vec<(usize, usize)>,
    speed: f64,
    stop_prefix: &'static str,
}

fn line_layouts(spec: &CitySpec) -> Vec<LineLayout> {
    let (rows, cols) = (spec.grid.rows, spec.grid.cols);
    let every = spec.transit.stop_every;
    let t = &spec.transit;
    let horizontal = |r: usize| (0..cols).step_by(every).map(|c| (r, c)).collect::<Vec<_>>();
    let vertical = |c: usize| (0..rows).step_by(every).map(|r| (r, c)).collect::<Vec<_>>();
    let surface = [
        ("B101", "101", VehicleKind::Bus, horizontal(rows / 4), t.bus_speed_mps),
        ("B102", "102", VehicleKind::Bus, vertical(cols / 4), t.bus_speed_mps),
        ("T1", "1", VehicleKind::Tram, horizontal(3 * rows / 4), t.tram_speed_mps),
        ("T2", "2", VehicleKind::Tram, vertical(3 * cols / 4), t.tram_speed_mps),
    ];
    let mut out: Vec<LineLayout> = surface
        .into_iter()
        .take(t.surface_lines)
        .map(|(id, name, kind, nodes, speed)| LineLayout { route: Route { id: id.into(), short_name: name.into(), kind }, nodes, speed, stop_prefix: "S" })
        .collect();
    if t.metro {
        let r = rows / 2;
        let nodes: Vec<(usize, usize)> = (0..cols).step_by(every.max(3)).map(|c| (r, c)).collect();
        out.push(LineLayout { route: Route { id: "M1".into(), short_name: "M1".into(), kind: VehicleKind::Metro }, nodes, speed: t.metro_speed_mps, stop_prefix: "M" });
    }
    out
}

fn stop_id(prefix: &str, (r, c): (usize, usize)) -> String {
    format!("{prefix}{r}_{c}")
}

/// Stop offsets (arrival, departure) from the trip start along `nodes`.
fn run_offsets(grid: &GridSpec, nodes: &[(usize, usize)], speed: f64, dwell: i32) -> Vec<(i32, i32)> {
    let mut t = 0;
    let mut out = Vec::with_capacity(nodes.len());
    for (i, &n) in nodes.iter().enumerate() {
        if i > 0 {
            let p = nodes[i - 1];
            t += (haversine_m(grid.node_pos(p.0, p.1), grid.node_pos(n.0, n.1)) / speed).ceil() as i32;
        }
        let d = if i == 0 || i + 1 == nodes.len() { 0 } else { dwell };
        out.push((t, t + d));
        t += d;
    }
    out
}

fn build_timetable(spec: &CitySpec, grid: &GridSpec) -> Result<Timetable, SynthError> {
    let t = &spec.transit;
    let dates = spec.survey_dates();
    let calendar = ServiceCalendar { weekdays: [true; 7], start: dates[0] - Duration::days(14), end: *dates.last().unwrap() + Duration::days(7) };
    let mut stops: Vec<Stop> = Vec::new();
    let mut routes = Vec::new();
    let mut trips = Vec::new();
    for layout in line_layouts(spec) {
        for &n in &layout.nodes {
            let id = stop_id(layout.stop_prefix, n);
            if !stops.iter().any(|s| s.id == id) {
                stops.push(Stop { id: id.clone(), name: format!("Stop {id}"), pos: grid.node_pos(n.0, n.1), kind: layout.route.kind });
            }
        }
        let offsets = run_offsets(grid, &layout.nodes, layout.speed, t.dwell_s);
        let directions = [layout.nodes.clone(), layout.nodes.iter().rev().copied().collect::<Vec<_>>()];
        if layout.route.kind == VehicleKind::Metro {
            let headways: HeadwayTable = (t.first_departure_h..=t.last_departure_h).map(|h| (h, t.metro_headway_s)).collect();
            let mut line_trips = Vec::new();
            for (dir, nodes) in directions.iter().enumerate() {
                let offs = run_offsets(grid, nodes, layout.speed, t.dwell_s);
                let pattern = FrequencyPattern {
                    route_id: layout.route.id.clone(),
                    service_id: "wk".into(),
                    trip_prefix: format!("{}_{dir}", layout.route.id),
                    stops: nodes.iter().zip(&offs).map(|(&n, &(a, d))| (stop_id(layout.stop_prefix, n), a, d)).collect(),
                };
                line_trips.extend(expand_frequency_service(&pattern, &headways).map_err(|e| SynthError::Config(e.to_string()))?);
            }
            assign_blocks(&mut line_trips, t.layover_s);
            trips.extend(line_trips);
        } else {
            let first = t.first_departure_h as i32 * 3600;
            let last = t.last_departure_h as i32 * 3600;
            let mut line_trips = Vec::new();
            for (dir, nodes) in directions.iter().enumerate() {
                let offs = if dir == 0 { offsets.clone() } else { run_offsets(grid, nodes, layout.speed, t.dwell_s) };
                let mut start = first + dir as i32 * t.headway_s / 2;
                let mut k = 0;
                while start <= last {
                    let stop_times = nodes
                        .iter()
                        .zip(&offs)
                        .enumerate()
                        .map(|(i, (&n, &(a, d)))| TripStop {
                            stop_id: stop_id(layout.stop_prefix, n),
                            time: StopTime { arrival: start + a, departure: start + d, sequence: i as u32 + 1 },
                        })
                        .collect();
                    line_trips.push(TransitTrip {
                        id: format!("{}_{dir}_{k}", layout.route.id),
                        route_id: layout.route.id.clone(),
                        service_id: "wk".into(),
                        block_id: None,
                        stop_times,
                    });
                    start += t.headway_s;
                    k += 1;
                }
            }
            assign_blocks(&mut line_trips, t.layover_s);
            trips.extend(line_trips);
        }
        routes.push(layout.route);
    }
    Timetable::new(stops, routes, trips, vec![("wk".into(), calendar)], Provenance::Planned).map_err(|e| SynthError::Config(e.to_string()))
}

/// Chains trips into vehicle blocks: each trip takes the lowest-numbered
/// vehicle waiting at its first stop for at least `layover` seconds.
fn assign_blocks(trips: &mut [TransitTrip], layover: i32) {
    trips.sort_by(|a, b| (a.first_departure(), &a.id).cmp(&(b.first_departure(), &b.id)));
    let mut vehicles: Vec<(i32, String)> = Vec::new();
    for trip in trips.iter_mut() {
        let dep = trip.first_departure().unwrap();
        let from = &trip.stop_times[0].stop_id;
        let to = trip.stop_times.last().unwrap().stop_id.clone();
        let arr = trip.last_arrival().unwrap();
        let v = match vehicles.iter().position(|(free, at)| at == from && free + layover <= dep) {
            Some(v) => v,
            None => {
                vehicles.push((0, String::new()));
                vehicles.len() - 1
            }
        };
        vehicles[v] = (arr, to);
        trip.block_id = Some((v + 1).to_string());
    }
}

fn write_zones(spec: &CitySpec, grid: &GridSpec, out: &Path) -> Result<(), SynthError> {
    let mut cuts_r: Vec<usize> = (0..grid.rows).step_by(3).collect();
    let mut cuts_c: Vec<usize> = (0..grid.cols).step_by(3).collect();
    if *cuts_r.last().unwrap() != grid.rows - 1 {
        cuts_r.push(grid.rows - 1);
    }
    if *cuts_c.last().unwrap() != grid.cols - 1 {
        cuts_c.push(grid.cols - 1);
    }
    let mut zones = Vec::new();
    let mut centroids = Vec::new();
    for r in cuts_r.windows(2) {
        for c in cuts_c.windows(2) {
            let ring = vec![grid.node_pos(r[0], c[0]), grid.node_pos(r[0], c[1]), grid.node_pos(r[1], c[1]), grid.node_pos(r[1], c[0])];
            centroids.push(LatLon::new(ring.iter().map(|p| p.lat).sum::<f64>() / 4.0, ring.iter().map(|p| p.lon).sum::<f64>() / 4.0));
            zones.push(((zones.len() + 1).to_string(), vec![ring]));
        }
    }
    let features: Vec<Feature> = zones.iter().map(|(id, rings)| Feature::new(Geometry::Polygon(rings.clone())).with("id", id.as_str())).collect();
    let path = out.join("zones.geojson");
    write_features(&path, &features).map_err(|e| write_err(&path)(&e))?;
    let zs = ZoneSet::from_geojson(&path).map_err(|e| write_err(&path)(&e))?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5a0e);
    let n = zs.len();
    let pos_of: Vec<LatLon> = zs.ids().map(|id| centroids[id.parse::<usize>().unwrap() - 1]).collect();
    let attract: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
    let center = grid.point(grid.width_m() / 2.0, grid.height_m() / 2.0);
    let mut m = ZoneMatrices::new(&zs);
    for hour in 6u8..=20 {
        let rush = (6..9).contains(&hour) || (15..19).contains(&hour);
        let mut free = vec![0.0; n * n];
        let mut traffic = vec![0.0; n * n];
        let mut car = vec![0.0; n * n];
        let mut pt = vec![0.0; n * n];
        for o in 0..n {
            for d in 0..n {
                let dist = haversine_m(pos_of[o], pos_of[d]);
                let f = 60.0 + dist / 11.1;
                let central = 1.0 - (haversine_m(pos_of[d], center) / (grid.width_m() + 1.0)).min(1.0);
                let congestion = if rush { 1.3 + 0.5 * central } else { 1.05 + 0.1 * central };
                free[o * n + d] = f;
                traffic[o * n + d] = f * congestion;
                let base = attract[d] * if rush { 40.0 } else { 15.0 } / (1.0 + dist / 1000.0);
                car[o * n + d] = (base * rng.gen_range(0.8..1.2)).round();
                pt[o * n + d] = (base * 0.8 * rng.gen_range(0.8..1.2)).round();
            }
        }
        for (kind, v) in [(MatrixKind::TtbcFreeflow, free), (MatrixKind::TtbcTraffic, traffic), (MatrixKind::TdCar, car), (MatrixKind::TdPt, pt)] {
            m.insert(kind, hour, v).map_err(|e| SynthError::Config(e.to_string()))?;
        }
    }
    let dir = out.join("matrices");
    std::fs::create_dir_all(&dir).map_err(|e| write_err(&dir)(&e))?;
    m.write_dir(&dir, &zs).map_err(|e| write_err(&dir)(&e))
}

fn write_sensors(spec: &CitySpec, grid: &GridSpec, out: &Path, clock: &ServiceClock) -> Result<(), SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5e45);
    let dates = spec.survey_dates();
    let from = clock.midnight(dates[0] - Duration::days(2));
    let to = clock.midnight(*dates.last().unwrap() + Duration::days(1));
    let gap_day = (clock.midnight(dates[0]), clock.midnight(dates[0]) + 86_400);
    let stations = [
        ("W1", 0.2, 0.2, true),
        ("W2", 0.8, 0.3, true),
        ("W3", 0.5, 0.8, true),
        ("P1", 0.3, 0.5, false),
        ("P2", 0.7, 0.7, false),
        ("P3", 0.5, 0.2, false),
        ("P4", 0.9, 0.9, false),
    ];
    let mut series = Vec::new();
    for (si, &(id, fx, fy, weather)) in stations.iter().enumerate() {
        let pos = grid.point(fx * grid.width_m(), fy * grid.height_m());
        for p in EnvParameter::ALL.into_iter().filter(|p| p.is_weather() == weather) {
            let mut samples = Vec::new();
            let mut t = from;
            while t <= to {
                let in_gap = id == "W3" && t >= gap_day.0 && t < gap_day.1;
                if !in_gap && rng.gen_bool(0.97) {
                    let h = clock.seconds_of_day(t) as f64 / 3600.0;
                    let wave = (std::f64::consts::TAU * (h - 9.0) / 24.0).sin();
                    let noise: f64 = rng.gen_range(-1.0..1.0);
                    let v = match p {
                        EnvParameter::Temperature => 15.0 + 6.0 * wave + noise + si as f64 * 0.3,
                        EnvParameter::Rainfall6h => (rng.gen_range(-2.0..1.5f64)).max(0.0),
                        EnvParameter::Wind => 3.0 + 1.5 * noise.abs() + wave,
                        EnvParameter::Cloudiness => rng.gen_range(0..=8) as f64,
                        _ => (20.0 + 10.0 * wave + 5.0 * noise + si as f64).max(0.0),
                    };
                    samples.push((t, (v * 100.0).round() / 100.0));
                }
                t += 3600;
            }
            series.push(SensorSeries { station_id: id.into(), pos, parameter: p, samples });
        }
    }
    let store = SensorStore::new(series).map_err(|e| SynthError::Config(e.to_string()))?;
    let path = out.join("sensors.csv");
    store.write(&path).map_err(|e| write_err(&path)(&e))
}

fn write_spatial(spec: &CitySpec, grid: &GridSpec, graph: &StreetGraph, tt: &Timetable, out: &Path) -> Result<(), SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5ba7);
    let dir = out.join("spatial");
    std::fs::create_dir_all(&dir).map_err(|e| write_err(&dir)(&e))?;
    let roads: Vec<Feature> =
        graph.edges().iter().map(|e| Feature::new(Geometry::LineString(vec![graph.node_pos(e.from), graph.node_pos(e.to)]))).collect();
    let cx = grid.width_m() / 2.0;
    let cy = grid.height_m() / 2.0;
    let mut addresses = Vec::new();
    let mut population = Vec::new();
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let (x, y) = (c as f64 * grid.spacing_m, r as f64 * grid.spacing_m);
            let centrality = 1.0 - ((x - cx).hypot(y - cy) / cx.hypot(cy)).min(1.0);
            let n = rng.gen_range(0..=2) + (centrality * 6.0) as usize;
            for _ in 0..n {
                let p = grid.point((x + rng.gen_range(-100.0..100.0)).clamp(0.0, grid.width_m()), (y + rng.gen_range(-100.0..100.0)).clamp(0.0, grid.height_m()));
                addresses.push(Feature::new(Geometry::Point(p)));
            }
            let pop = (100.0 + 900.0 * centrality * rng.gen_range(0.7..1.3)).round();
            population.push(Feature::new(Geometry::Point(grid.node_pos(r, c))).with("population", pop));
        }
    }
    let mut green = Vec::new();
    for _ in 0..3 {
        let r = rng.gen_range(0..grid.rows - 2);
        let c = rng.gen_range(0..grid.cols - 2);
        let ring = vec![grid.node_pos(r, c), grid.node_pos(r, c + 2), grid.node_pos(r + 2, c + 2), grid.node_pos(r + 2, c)];
        green.push(Feature::new(Geometry::Polygon(vec![ring])));
    }
    let stops: Vec<Feature> = tt.stops.iter().map(|s| Feature::new(Geometry::Point(s.pos)).with("kind", s.kind.as_str())).collect();
    for (name, layer) in [("roads.geojson", roads), ("addresses.geojson", addresses), ("population.geojson", population), ("green.geojson", green), ("stops.geojson", stops)] {
        let path = dir.join(name);
        write_features(&path, &layer).map_err(|e| write_err(&path)(&e))?;
    }
    Ok(())
}

struct TraceOutput {
    records: Vec<VehicleLocation>,
    delays: Vec<(NaiveDate, String, String, String, i64)>,
}

fn simulate_traces(spec: &CitySpec, tt: &Timetable, clock: &ServiceClock) -> TraceOutput {
    let tc = &spec.traces;
    let delay_dist = Normal::new(tc.delay_mean_s, tc.delay_sd_s.max(1e-9)).unwrap();
    let halt_dist = Exp::new(1.0 / tc.halt_mean_s).unwrap();
    let mut records = Vec::new();
    let mut delays = Vec::new();
    for date in spec.trace_dates() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ (date.num_days_from_ce() as u64).wrapping_mul(0x2545_f491));
        let midnight = clock.midnight(date);
        let mut blocks: BTreeMap<(String, String), Vec<&TransitTrip>> = BTreeMap::new();
        for trip in tt.trips_on(date) {
            let route = tt.route_of(trip);
            if let Some(b) = &trip.block_id {
                blocks.entry((route.short_name.clone(), b.clone())).or_default().push(trip);
            }
        }
        for ((line, brigade), mut block) in blocks {
            block.sort_by_key(|t| t.first_departure());
            let mut wps: Vec<Waypoint> = Vec::new();
            let mut halts = Vec::new();
            for trip in block {
                let delay = delay_dist.sample(&mut rng).round() as i64;
                delays.push((date, trip.id.clone(), line.clone(), brigade.clone(), delay));
                for (i, st) in trip.stop_times.iter().enumerate() {
                    let mut arrive = midnight + st.time.arrival as Epoch + delay;
                    if let Some(prev) = wps.last() {
                        arrive = arrive.max(prev.depart + 1);
                    }
                    let depart = (midnight + st.time.departure as Epoch + delay).max(arrive);
                    if i + 1 < trip.stop_times.len() && rng.gen_bool(tc.halt_probability) {
                        halts.push(Halt { after: wps.len(), fraction: rng.gen_range(0.3..0.7), duration_s: (halt_dist.sample(&mut rng) as Epoch).max(5) });
                    }
                    wps.push(Waypoint { pos: tt.stop(&st.stop_id).unwrap().pos, arrive, depart });
                }
            }
            let from = wps[0].depart - 60;
            let to = wps.last().unwrap().arrive + 60;
            records.extend(
                sample_trace(&wps, &halts, from, to, tc.cadence_s)
                    .into_iter()
                    .map(|(epoch, pos)| VehicleLocation { epoch, line: line.clone(), brigade: brigade.clone(), pos }),
            );
        }
    }
    records.sort_by(|a, b| (a.epoch, &a.line, &a.brigade).cmp(&(b.epoch, &b.line, &b.brigade)));
    TraceOutput { records, delays }
}

fn round6(p: LatLon) -> LatLon {
    LatLon::new((p.lat * 1e6).round() / 1e6, (p.lon * 1e6).round() / 1e6)
}

/// Minimal config TOML pointing at the generated fixture set.
pub fn fixture_config(spec: &CitySpec) -> String {
    format!(
        r#"seed = {seed}

[paths]
streets_nodes = "streets/nodes.csv"
streets_edges = "streets/edges.csv"
gtfs = "gtfs"
real_gtfs = "."
segments = "segments"
zones = "zones.geojson"
matrices = "matrices"
sensors = "sensors.csv"
spatial = "spatial"
survey = "survey.csv"
output = "out"

[clock]
utc_offset_s = {offset}
"#,
        seed = spec.seed,
        offset = spec.utc_offset_s
    )
}

/// Generates a complete fixture set under `out`.
pub fn generate_city(spec: &CitySpec, out: impl AsRef<Path>) -> Result<CityReport, SynthError> {
    spec.validate()?;
    let out = out.as_ref();
    let mk = |p: &Path| std::fs::create_dir_all(p).map_err(|e| write_err(p)(&e));
    mk(out)?;
    let grid = spec.grid_spec();
    let clock = ServiceClock::new(spec.utc_offset_s);

    let graph = grid_street_graph(&grid, spec.grid.arterial_every);
    let streets = out.join("streets");
    mk(&streets)?;
    graph.write_csv(streets.join("nodes.csv"), streets.join("edges.csv")).map_err(|e| write_err(&streets)(&e))?;
    let tt = build_timetable(spec, &grid)?;
    let gtfs_dir = out.join("gtfs");
    write_gtfs(&tt, &gtfs_dir).map_err(|e| write_err(&gtfs_dir)(&e))?;

    let traces = simulate_traces(spec, &tt, &clock);
    let trace_path = out.join("traces.csv");
    write_traces(&trace_path, &traces.records).map_err(|e| write_err(&trace_path)(&e))?;
    let delay_path = out.join("injected_delays.csv");
    let mut w = csv::Writer::from_path(&delay_path).map_err(|e| write_err(&delay_path)(&e))?;
    w.write_record(["date", "trip_id", "line", "brigade", "delay_s"]).map_err(|e| write_err(&delay_path)(&e))?;
    for (d, trip, line, brigade, delay) in &traces.delays {
        w.write_record([format_date(*d), trip.clone(), line.clone(), brigade.clone(), delay.to_string()]).map_err(|e| write_err(&delay_path)(&e))?;
    }
    w.flush().map_err(|e| write_err(&delay_path)(&e))?;

    write_zones(spec, &grid, out)?;
    write_sensors(spec, &grid, out, &clock)?;
    write_spatial(spec, &grid, &graph, &tt, out)?;
    let config_path = out.join("config.toml");
    std::fs::write(&config_path, fixture_config(spec)).map_err(|e| write_err(&config_path)(&e))?;

    let cfg = RunConfig::load(&config_path, &[]).map_err(|e| SynthError::Config(e.to_string()))?;
    let graph = Arc::new(StreetGraph::from_csv(streets.join("nodes.csv"), streets.join("edges.csv")).map_err(|e| write_err(&streets)(&e))?);
    let tt = parse_gtfs(&gtfs_dir).map_err(|e| write_err(&gtfs_dir)(&e))?;
    let (rows, labels) = simulate_survey(spec, &grid, &graph, &tt, &cfg, &clock);
    let survey_path = out.join("survey.csv");
    let person = ["age", "gender", "drivingLicence", "carAvailable", "bikeOwner"].map(String::from);
    write_survey(&survey_path, &person, &["purpose".to_string()], &rows, spec.survey.max_trips).map_err(|e| write_err(&survey_path)(&e))?;
    let labels_path = out.join("labels.csv");
    let mut w = csv::Writer::from_path(&labels_path).map_err(|e| write_err(&labels_path)(&e))?;
    w.write_record(["respondent_id", "trip_ordinal", "truth", "label"]).map_err(|e| write_err(&labels_path)(&e))?;
    for (id, n, truth, label) in &labels {
        w.write_record([id.clone(), n.to_string(), truth.as_str().into(), label.as_str().into()]).map_err(|e| write_err(&labels_path)(&e))?;
    }
    w.flush().map_err(|e| write_err(&labels_path)(&e))?;

    let mut label_counts = BTreeMap::new();
    for (_, _, _, l) in &labels {
        *label_counts.entry(l.as_str().to_string()).or_insert(0) += 1;
    }
    let n_delays = traces.delays.len();
    Ok(CityReport {
        stops: tt.stops.len(),
        trips: tt.trips.len(),
        trace_records: traces.records.len(),
        trace_dates: spec.trace_dates(),
        survey_dates: spec.survey_dates(),
        respondents: rows.len(),
        survey_trips: labels.len(),
        injected_delays: n_delays,
        mean_injected_delay_s: traces.delays.iter().map(|d| d.4 as f64).sum::<f64>() / n_delays.max(1) as f64,
        label_counts,
    })
}

type LabelRow = (String, u32, TravelMode, TravelMode);

fn simulate_survey(
    spec: &CitySpec,
    grid: &GridSpec,
    graph: &Arc<StreetGraph>,
    tt: &Timetable,
    cfg: &RunConfig,
    clock: &ServiceClock,
) -> (Vec<SurveyRow>, Vec<LabelRow>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5a11);
    let dates = spec.survey_dates();
    let nets: BTreeMap<NaiveDate, TransitNetwork> =
        dates.iter().map(|&d| (d, TransitNetwork::build(tt, graph.clone(), d, clock, cfg.transit_params()))).collect();
    let random_point = |rng: &mut ChaCha8Rng| round6(grid.point(rng.gen_range(0.0..grid.width_m()), rng.gen_range(0.0..grid.height_m())));
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..spec.survey.respondents {
        let id = format!("R{:04}", i + 1);
        let home = random_point(&mut rng);
        let age = rng.gen_range(18..80);
        let gender = if rng.gen_bool(0.5) { "F" } else { "M" };
        let licence = rng.gen_bool(0.7);
        let car_available = licence && rng.gen_bool(0.7);
        let bike_owner = rng.gen_bool(0.4);
        let person = vec![age.to_string(), gender.into(), licence.to_string(), car_available.to_string(), bike_owner.to_string()];
        let date = dates[rng.gen_range(0..dates.len())];
        let n_trips = rng.gen_range(1..=spec.survey.max_trips);
        let mut here = home;
        let mut t = clock.midnight(date) + 6 * 3600 + 1800 + rng.gen_range(0..150) * 60;
        let mut trips = Vec::new();
        for k in 0..n_trips {
            if clock.seconds_of_day(t) > 19 * 3600 {
                break;
            }
            let to = if k + 1 == n_trips && k > 0 {
                home
            } else if rng.gen_bool(spec.survey.short_trip_share) {
                let bearing = rng.gen_range(0.0..360.0);
                let p = crate::geodesy::destination(here, bearing, rng.gen_range(250.0..800.0));
                let sw = grid.node_pos(0, 0);
                let ne = grid.node_pos(grid.rows - 1, grid.cols - 1);
                round6(LatLon::new(p.lat.clamp(sw.lat, ne.lat), p.lon.clamp(sw.lon, ne.lon)))
            } else {
                random_point(&mut rng)
            };
            if to == here {
                continue;
            }
            let walk = route_unimodal(graph, here, to, StreetMode::Walk, &cfg.speeds).ok();
            let cycle = route_unimodal(graph, here, to, StreetMode::Cycle, &cfg.speeds).ok();
            let car = route_unimodal(graph, here, to, StreetMode::Car, &cfg.speeds).ok();
            let conns = nets[&date].plan_connections(here, to, t, cfg.window, cfg.routing.max_results);
            let min_pt = conns.iter().map(|c| c.total_duration_s).min();
            let inputs = RuleInputs {
                walk_distance_m: walk.map(|r| r.distance_m + r.access_m + r.egress_m),
                car_duration_s: car.map(|r| r.duration_s),
                min_transit_s: min_pt.map(|d| d as f64),
                car_available,
                bike_owner,
            };
            let truth = spec.rule.decide(&inputs);
            let label = if spec.survey.noise > 0.0 && rng.gen_bool(spec.survey.noise) {
                let others: Vec<TravelMode> = TravelMode::ALL.into_iter().filter(|m| *m != truth).collect();
                others[rng.gen_range(0..others.len())]
            } else {
                truth
            };
            let duration = match truth {
                TravelMode::Walk => walk.map(|r| r.duration_s + (r.access_m + r.egress_m) / cfg.speeds.walk_mps),
                TravelMode::Bike => cycle.map(|r| r.duration_s + (r.access_m + r.egress_m) / cfg.speeds.cycle_mps),
                TravelMode::Car => car.map(|r| r.duration_s + 120.0),
                TravelMode::Pt => min_pt.map(|d| d as f64),
            }
            .unwrap_or(1800.0)
            .max(60.0)
            .ceil() as i64;
            let arrival = t + duration;
            let purpose = ["work", "school", "shopping", "leisure", "other"][rng.gen_range(0..5)];
            trips.push(SurveyTrip {
                origin: here,
                destination: to,
                departure_local: clock.local(t).format("%Y-%m-%d %H:%M:%S").to_string(),
                arrival_local: Some(clock.local(arrival).format("%Y-%m-%d %H:%M:%S").to_string()),
                mode: label,
                answers: vec![purpose.into()],
            });
            labels.push((id.clone(), trips.len() as u32, truth, label));
            here = to;
            t = arrival + rng.gen_range(3600..5 * 3600);
        }
        rows.push(SurveyRow { respondent_id: id, home: Some(home), person, trips });
    }
    (rows, labels)
}
