use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{NaiveDate, Timelike};
use serde::{Deserialize, Serialize};

use super::survey::{TravelMode, Trip};
use crate::built_env::{built_env_names, compute_built_env, SpatialDb};
use crate::car_model::{duration_in_traffic, parking_difficulty, ParkingMethod, ZoneMatrices, ZoneSet};
use crate::clock::{overlapping_bands, preceding_working_day, Epoch, ServiceClock};
use crate::env_features::{aggregate_env, env_feature_names, SensorStore};
use crate::gtfs::Timetable;
use crate::router::{
    aggregate_pt_los, pt_los_names, route_unimodal, Connection, ModeChoiceWindow, PricingTable, Speeds, StreetGraph, StreetMode, TransitNetwork,
    TransitParams,
};
use crate::vehicle_flow::{query_experience, ExperienceAggregates, SegmentStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FeatureTag {
    Survey,
    WalkingLos,
    CyclingLos,
    CarLos,
    ECarLos,
    PlanPtLos,
    RealPtLos,
    Diff,
    PtExperience,
    Weather,
    Pollution,
    BuiltEnv,
}

impl FeatureTag {
    pub const ALL: [FeatureTag; 12] = [
        FeatureTag::Survey,
        FeatureTag::WalkingLos,
        FeatureTag::CyclingLos,
        FeatureTag::CarLos,
        FeatureTag::ECarLos,
        FeatureTag::PlanPtLos,
        FeatureTag::RealPtLos,
        FeatureTag::Diff,
        FeatureTag::PtExperience,
        FeatureTag::Weather,
        FeatureTag::Pollution,
        FeatureTag::BuiltEnv,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureTag::Survey => "SURVEY",
            FeatureTag::WalkingLos => "WALKING_LOS",
            FeatureTag::CyclingLos => "CYCLING_LOS",
            FeatureTag::CarLos => "CAR_LOS",
            FeatureTag::ECarLos => "E_CAR_LOS",
            FeatureTag::PlanPtLos => "PLAN_PT_LOS",
            FeatureTag::RealPtLos => "REAL_PT_LOS",
            FeatureTag::Diff => "DIFF",
            FeatureTag::PtExperience => "PT_EXPERIENCE",
            FeatureTag::Weather => "WEATHER",
            FeatureTag::Pollution => "POLLUTION",
            FeatureTag::BuiltEnv => "BUILT_ENV",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s.trim())
    }

    /// Level-of-service tags that feed differential features.
    pub fn is_los(self) -> bool {
        matches!(self, FeatureTag::WalkingLos | FeatureTag::CyclingLos | FeatureTag::CarLos | FeatureTag::PlanPtLos | FeatureTag::RealPtLos)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub tag: FeatureTag,
    pub name: String,
    pub value: f64,
}

/// A labelled instance: survey answers as raw strings plus numeric features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub respondent_id: String,
    pub ordinal: u32,
    pub departure: Epoch,
    pub label: TravelMode,
    pub survey: Vec<String>,
    pub features: Vec<Feature>,
    /// Feature sets that fell back to sentinels because a service failed.
    pub degraded: Vec<FeatureTag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    pub window: ModeChoiceWindow,
    pub speeds: Speeds,
    pub pricing: PricingTable,
    pub max_results: usize,
    pub los_sentinel: f64,
    pub env_sentinel: f64,
    pub built_env_radius_m: f64,
    pub env_windows_s: Vec<i64>,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            window: ModeChoiceWindow::default(),
            speeds: Speeds::default(),
            pricing: PricingTable::default(),
            max_results: 5,
            los_sentinel: -1.0,
            env_sentinel: -9999.0,
            built_env_radius_m: 500.0,
            env_windows_s: vec![7200, 86_400],
        }
    }
}

/// Read-only stores consulted while fusing trips.
pub struct Services {
    pub clock: ServiceClock,
    pub graph: Arc<StreetGraph>,
    pub planned: Timetable,
    pub transit: TransitParams,
    pub real: BTreeMap<NaiveDate, Timetable>,
    pub segments: SegmentStore,
    pub zones: Option<(ZoneSet, ZoneMatrices)>,
    pub sensors: Option<SensorStore>,
    pub spatial: Option<SpatialDb>,
    pub params: FusionParams,
    planned_nets: BTreeMap<NaiveDate, TransitNetwork>,
    real_nets: BTreeMap<NaiveDate, TransitNetwork>,
}

impl Services {
    pub fn new(clock: ServiceClock, graph: Arc<StreetGraph>, planned: Timetable, transit: TransitParams, params: FusionParams) -> Self {
        Self {
            clock,
            graph,
            planned,
            transit,
            real: BTreeMap::new(),
            segments: SegmentStore::new(),
            zones: None,
            sensors: None,
            spatial: None,
            params,
            planned_nets: BTreeMap::new(),
            real_nets: BTreeMap::new(),
        }
    }

    /// Builds transit networks for every trip date and its preceding working day.
    pub fn prepare(&mut self, trips: &[Trip]) {
        let dates: std::collections::BTreeSet<NaiveDate> = trips.iter().map(|t| self.clock.date_of(t.departure)).collect();
        for d in dates {
            if !self.planned_nets.contains_key(&d) {
                let net = TransitNetwork::build(&self.planned, self.graph.clone(), d, &self.clock, self.transit);
                self.planned_nets.insert(d, net);
            }
            let p = preceding_working_day(d);
            if !self.real_nets.contains_key(&p) {
                if let Some(tt) = self.real.get(&p) {
                    let net = TransitNetwork::build(tt, self.graph.clone(), p, &self.clock, self.transit);
                    self.real_nets.insert(p, net);
                }
            }
        }
    }

    fn planned_net(&self, date: NaiveDate) -> Option<&TransitNetwork> {
        self.planned_nets.get(&date)
    }

    fn real_net(&self, date: NaiveDate) -> Option<&TransitNetwork> {
        self.real_nets.get(&date)
    }
}

fn experience_names() -> Vec<String> {
    ExperienceAggregates::sentinel(0.0).named_values().into_iter().map(|(n, _)| n).collect()
}

/// Modes compared by differential features, with the tag holding their durations.
const DIFF_MODES: [(&str, FeatureTag); 5] = [
    ("Car", FeatureTag::CarLos),
    ("Walk", FeatureTag::WalkingLos),
    ("Cycle", FeatureTag::CyclingLos),
    ("Transit", FeatureTag::PlanPtLos),
    ("TransitReal", FeatureTag::RealPtLos),
];

fn is_pt(tag: FeatureTag) -> bool {
    matches!(tag, FeatureTag::PlanPtLos | FeatureTag::RealPtLos)
}

/// Name of the duration column a differential feature reads for one mode.
fn duration_column(tag: FeatureTag, stat: &str) -> String {
    match tag {
        FeatureTag::CarLos => "Duration_CAR".into(),
        FeatureTag::WalkingLos => "Duration_WALK".into(),
        FeatureTag::CyclingLos => "Duration_CYCLE".into(),
        FeatureTag::PlanPtLos => format!("{stat}Duration_TRANSIT"),
        FeatureTag::RealPtLos => format!("{stat}Duration_TRANSIT_REAL"),
        _ => unreachable!(),
    }
}

/// Differential feature definition: name plus the two duration columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffSpec {
    pub name: String,
    pub ratio: bool,
    pub a: (FeatureTag, String),
    pub b: (FeatureTag, String),
}

pub fn diff_specs() -> Vec<DiffSpec> {
    let mut out = Vec::new();
    for &(an, at) in &DIFF_MODES {
        for &(bn, bt) in &DIFF_MODES {
            if at == bt {
                continue;
            }
            let stats: &[&str] = if is_pt(at) || is_pt(bt) { &["min", "avg"] } else { &[""] };
            for stat in stats {
                for ratio in [false, true] {
                    let kind = if ratio { "Ratio" } else { "Difference" };
                    out.push(DiffSpec {
                        name: format!("{stat}Duration{kind}{an}To{bn}_DIFF"),
                        ratio,
                        a: (at, duration_column(at, stat)),
                        b: (bt, duration_column(bt, stat)),
                    });
                }
            }
        }
    }
    out
}

/// Tags of the two operands of a differential feature.
pub fn diff_operand_tags(name: &str) -> Option<(FeatureTag, FeatureTag)> {
    let core = name.strip_suffix("_DIFF")?;
    let core = core.strip_prefix("min").or_else(|| core.strip_prefix("avg")).unwrap_or(core);
    let pair = core.strip_prefix("DurationDifference").or_else(|| core.strip_prefix("DurationRatio"))?;
    DIFF_MODES.iter().find_map(|&(an, at)| {
        DIFF_MODES.iter().find_map(|&(bn, bt)| (at != bt && pair == format!("{an}To{bn}")).then_some((at, bt)))
    })
}

/// Differences `a - b` and ratios `a / b` of LOS durations. A sentinel
/// operand or a zero denominator yields the sentinel.
pub fn differential_features(los: &[Feature], sentinel: f64) -> Vec<Feature> {
    let get = |name: &str| los.iter().find(|f| f.name == name).map(|f| f.value).unwrap_or(sentinel);
    diff_specs()
        .into_iter()
        .map(|s| {
            let a = get(&s.a.1);
            let b = get(&s.b.1);
            let value = if a == sentinel || b == sentinel {
                sentinel
            } else if s.ratio {
                if b == 0.0 {
                    sentinel
                } else {
                    a / b
                }
            } else {
                a - b
            };
            Feature { tag: FeatureTag::Diff, name: s.name, value }
        })
        .collect()
}

fn unimodal_names(suffix: &str) -> Vec<String> {
    ["Duration", "Distance", "ElevationGain", "hasRoute"].iter().map(|q| format!("{q}_{suffix}")).collect()
}

const CAR_NAMES: [&str; 4] = ["Duration_CAR", "Speed_CAR", "Distance_CAR", "WalkDistance_CAR"];
const E_CAR_NAMES: [&str; 4] = ["DurationInTraffic_CAR", "ParkingOwnZone_CAR", "ParkingNeighborhood_CAR", "ParkingRank_CAR"];

/// Numeric feature columns in emission order; a function of the parameters only.
pub fn feature_schema(params: &FusionParams) -> Vec<(FeatureTag, String)> {
    let mut out = Vec::new();
    let mut add = |tag: FeatureTag, names: Vec<String>| out.extend(names.into_iter().map(|n| (tag, n)));
    add(FeatureTag::WalkingLos, unimodal_names("WALK"));
    add(FeatureTag::CyclingLos, unimodal_names("CYCLE"));
    add(FeatureTag::CarLos, CAR_NAMES.iter().map(|s| s.to_string()).collect());
    add(FeatureTag::ECarLos, E_CAR_NAMES.iter().map(|s| s.to_string()).collect());
    add(FeatureTag::PlanPtLos, pt_los_names().into_iter().map(|n| format!("{n}_TRANSIT")).collect());
    add(FeatureTag::RealPtLos, pt_los_names().into_iter().map(|n| format!("{n}_TRANSIT_REAL")).collect());
    let mut exp = Vec::new();
    for level in ["LOW", "HIGH"] {
        exp.extend(experience_names().into_iter().map(|n| format!("{n}_{level}_TRANSIT")));
    }
    exp.push("hasExperience_TRANSIT".into());
    add(FeatureTag::PtExperience, exp);
    let env = env_feature_names(&params.env_windows_s);
    add(FeatureTag::Weather, env.iter().filter(|(_, p)| p.is_weather()).map(|(n, _)| n.clone()).collect());
    add(FeatureTag::Pollution, env.iter().filter(|(_, p)| !p.is_weather()).map(|(n, _)| n.clone()).collect());
    let mut be = built_env_names("");
    be.extend(built_env_names("home"));
    add(FeatureTag::BuiltEnv, be);
    add(FeatureTag::Diff, diff_specs().into_iter().map(|s| s.name).collect());
    out
}

struct Out {
    features: Vec<Feature>,
    degraded: Vec<FeatureTag>,
}

impl Out {
    fn push(&mut self, tag: FeatureTag, name: impl Into<String>, value: f64) {
        self.features.push(Feature { tag, name: name.into(), value });
    }

    fn degrade(&mut self, tag: FeatureTag) {
        if !self.degraded.contains(&tag) {
            self.degraded.push(tag);
        }
    }
}

fn unimodal(out: &mut Out, s: &Services, trip: &Trip, mode: StreetMode, tag: FeatureTag, suffix: &str) -> Option<f64> {
    let sentinel = s.params.los_sentinel;
    let speed = match mode {
        StreetMode::Walk => s.params.speeds.walk_mps,
        _ => s.params.speeds.cycle_mps,
    };
    match route_unimodal(&s.graph, trip.origin, trip.destination, mode, &s.params.speeds) {
        Ok(r) => {
            let off = r.access_m + r.egress_m;
            out.push(tag, format!("Duration_{suffix}"), r.duration_s + off / speed);
            out.push(tag, format!("Distance_{suffix}"), r.distance_m + off);
            out.push(tag, format!("ElevationGain_{suffix}"), r.elevation_gain_m);
            out.push(tag, format!("hasRoute_{suffix}"), 1.0);
            Some(r.distance_m + off)
        }
        Err(_) => {
            for n in unimodal_names(suffix) {
                let v = if n.starts_with("has") { 0.0 } else { sentinel };
                out.push(tag, n, v);
            }
            None
        }
    }
}

fn car(out: &mut Out, s: &Services, trip: &Trip) -> Option<f64> {
    match route_unimodal(&s.graph, trip.origin, trip.destination, StreetMode::Car, &s.params.speeds) {
        Ok(r) => {
            let speed = if r.duration_s > 0.0 { r.distance_m / r.duration_s } else { 0.0 };
            for (n, v) in CAR_NAMES.iter().zip([r.duration_s, speed, r.distance_m, r.access_m + r.egress_m]) {
                out.push(FeatureTag::CarLos, *n, v);
            }
            Some(r.duration_s)
        }
        Err(_) => {
            for n in CAR_NAMES {
                out.push(FeatureTag::CarLos, n, s.params.los_sentinel);
            }
            None
        }
    }
}

fn extended_car(out: &mut Out, s: &Services, trip: &Trip, free_flow: Option<f64>) {
    let sentinel = s.params.los_sentinel;
    let mut values = [sentinel; 4];
    match &s.zones {
        Some((zones, m)) => {
            let hour = s.clock.local(trip.departure).hour() as u8;
            match (zones.zone_of(trip.origin), zones.zone_of(trip.destination)) {
                (Ok(o), Ok(d)) => {
                    if let Some(f) = free_flow {
                        match duration_in_traffic(f, o, d, hour, zones, m) {
                            Ok(v) => values[0] = v,
                            Err(_) => out.degrade(FeatureTag::ECarLos),
                        }
                    }
                    for (i, method) in ParkingMethod::ALL.into_iter().enumerate() {
                        match parking_difficulty(d, hour, method, zones, m) {
                            Ok(v) => values[i + 1] = v,
                            Err(_) => out.degrade(FeatureTag::ECarLos),
                        }
                    }
                }
                _ => out.degrade(FeatureTag::ECarLos),
            }
        }
        None => out.degrade(FeatureTag::ECarLos),
    }
    for (n, v) in E_CAR_NAMES.iter().zip(values) {
        out.push(FeatureTag::ECarLos, *n, v);
    }
}

fn pt_los(out: &mut Out, s: &Services, net: Option<&TransitNetwork>, departure: Epoch, trip: &Trip, direct_walk: f64, real: bool) -> Vec<Connection> {
    let tag = if real { FeatureTag::RealPtLos } else { FeatureTag::PlanPtLos };
    let connections = match net {
        Some(net) => net.plan_connections(trip.origin, trip.destination, departure, s.params.window, s.params.max_results),
        None => {
            out.degrade(tag);
            Vec::new()
        }
    };
    let los = aggregate_pt_los(&connections, direct_walk, &s.params.pricing, real, s.params.los_sentinel);
    for (n, v) in los.named() {
        out.push(tag, n, v);
    }
    connections
}

fn experience(out: &mut Out, s: &Services, trip: &Trip, connections: &[Connection]) {
    let sentinel = s.params.los_sentinel;
    let day = preceding_working_day(s.clock.date_of(trip.departure));
    let from_s = s.clock.seconds_of_day(trip.departure);
    let to_s = from_s + trip.arrival.map_or(0, |a| a - trip.departure);
    let (lo, hi) = overlapping_bands(from_s, to_s);
    let midnight = s.clock.midnight(day);
    let period = (midnight + lo, midnight + hi);
    let found: Vec<ExperienceAggregates> = connections
        .iter()
        .filter_map(|c| {
            let mut edges = Vec::new();
            let mut lines = Vec::new();
            for leg in c.vehicle_legs() {
                edges.extend(leg.stops.windows(2).map(|w| (w[0].clone(), w[1].clone())));
                lines.extend(leg.line.clone());
            }
            query_experience(&s.segments, &edges, &lines, period, sentinel).ok().filter(|e| e.has_experience)
        })
        .collect();
    let names = experience_names();
    let per_conn: Vec<Vec<f64>> = found.iter().map(|e| e.named_values().into_iter().map(|(_, v)| v).collect()).collect();
    for (level, pick) in [("LOW", f64::min as fn(f64, f64) -> f64), ("HIGH", f64::max)] {
        for (i, n) in names.iter().enumerate() {
            let v = per_conn.iter().map(|v| v[i]).reduce(pick).unwrap_or(sentinel);
            out.push(FeatureTag::PtExperience, format!("{n}_{level}_TRANSIT"), v);
        }
    }
    out.push(FeatureTag::PtExperience, "hasExperience_TRANSIT", if found.is_empty() { 0.0 } else { 1.0 });
}

fn environment(out: &mut Out, s: &Services, trip: &Trip) {
    let windows = &s.params.env_windows_s;
    let values: Vec<(String, bool, f64)> = match &s.sensors {
        Some(store) => aggregate_env(store, trip.origin, trip.departure, windows, s.params.env_sentinel)
            .into_iter()
            .map(|f| (f.name, f.parameter.is_weather(), f.value))
            .collect(),
        None => {
            out.degrade(FeatureTag::Weather);
            out.degrade(FeatureTag::Pollution);
            env_feature_names(windows)
                .into_iter()
                .map(|(n, p)| {
                    let v = if n.starts_with("has") { 0.0 } else { s.params.env_sentinel };
                    (n, p.is_weather(), v)
                })
                .collect()
        }
    };
    for weather in [true, false] {
        let tag = if weather { FeatureTag::Weather } else { FeatureTag::Pollution };
        for (n, _, v) in values.iter().filter(|x| x.1 == weather) {
            out.push(tag, n.clone(), *v);
        }
    }
}

fn built_environment(out: &mut Out, s: &Services, trip: &Trip) {
    for (prefix, p) in [("", Some(trip.origin)), ("home", trip.home)] {
        let computed = match (&s.spatial, p) {
            (Some(db), Some(p)) => compute_built_env(db, p, s.params.built_env_radius_m).ok(),
            _ => None,
        };
        if s.spatial.is_none() || (computed.is_none() && p.is_some()) {
            out.degrade(FeatureTag::BuiltEnv);
        }
        match computed {
            Some(f) => {
                for (n, v) in f.named(prefix) {
                    out.push(FeatureTag::BuiltEnv, n, v);
                }
            }
            None => {
                for n in built_env_names(prefix) {
                    out.push(FeatureTag::BuiltEnv, n, s.params.los_sentinel);
                }
            }
        }
    }
}

/// Builds the full feature vector of one trip. Failing services degrade
/// their feature set to sentinels; the instance is always produced.
pub fn fuse_trip(trip: &Trip, s: &Services) -> Instance {
    let mut out = Out { features: Vec::new(), degraded: Vec::new() };
    let walk_m = unimodal(&mut out, s, trip, StreetMode::Walk, FeatureTag::WalkingLos, "WALK");
    unimodal(&mut out, s, trip, StreetMode::Cycle, FeatureTag::CyclingLos, "CYCLE");
    let free_flow = car(&mut out, s, trip);
    extended_car(&mut out, s, trip, free_flow);

    let direct_walk = walk_m.unwrap_or(f64::INFINITY);
    let date = s.clock.date_of(trip.departure);
    let plan = pt_los(&mut out, s, s.planned_net(date), trip.departure, trip, direct_walk, false);
    let prev = preceding_working_day(date);
    let real_departure = s.clock.midnight(prev) + s.clock.seconds_of_day(trip.departure);
    pt_los(&mut out, s, s.real_net(prev), real_departure, trip, direct_walk, true);
    experience(&mut out, s, trip, &plan);
    environment(&mut out, s, trip);
    built_environment(&mut out, s, trip);

    let los: Vec<Feature> = out.features.iter().filter(|f| f.tag.is_los()).cloned().collect();
    out.features.extend(differential_features(&los, s.params.los_sentinel));
    Instance {
        respondent_id: trip.respondent_id.clone(),
        ordinal: trip.ordinal,
        departure: trip.departure,
        label: trip.mode,
        survey: trip.answers.clone(),
        features: out.features,
        degraded: out.degraded,
    }
}
