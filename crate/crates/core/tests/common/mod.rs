#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use chrono::NaiveDate;
use modefusion::clock::{Epoch, ServiceClock};
use modefusion::geodesy::{destination, LatLon};
use modefusion::gtfs::{Provenance, Route, ServiceCalendar, Stop, StopTime, Timetable, TransitTrip, TripStop, VehicleKind};
use modefusion::router::{ModeChoiceWindow, TransitNetwork};
use modefusion::config::RunConfig;
use modefusion::pipeline::{run_build_real, run_ingest};
use modefusion::synth::{generate_city, sample_trace, CityReport, CitySpec, Halt, Waypoint};
use modefusion::vehicle_flow::VehicleLocation;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Node {
    InTrip(usize, usize),
    AtStop(usize, bool),
    Dest,
}

/// Earliest arrival (seconds after midnight) by Dijkstra over a time-expanded
/// event graph: departure events of every trip, stop nodes reached by a ride
/// or by a single footpath, and the destination.
pub fn time_expanded_earliest_arrival(net: &TransitNetwork, o: LatLon, d: LatLon, t: i64, window: ModeChoiceWindow) -> Option<i64> {
    let mut departures: Vec<Vec<(i64, usize, usize)>> = vec![Vec::new(); net.stop_count()];
    for tr in 0..net.trip_count() {
        let v = net.trip(tr);
        for pos in 0..v.stops.len() - 1 {
            departures[v.stops[pos]].push((v.dep[pos], tr, pos));
        }
    }
    for d in departures.iter_mut() {
        d.sort();
    }
    let egress: HashMap<usize, f64> = net.access_stops(d).into_iter().collect();
    let (lo, hi) = (t - window.delta_s, t + window.delta_f);
    let mut heap = BinaryHeap::new();
    let mut best: HashMap<Node, i64> = HashMap::new();
    let push = |heap: &mut BinaryHeap<Reverse<(i64, Node)>>, best: &mut HashMap<Node, i64>, n: Node, at: i64| {
        if best.get(&n).is_none_or(|&b| at < b) {
            best.insert(n, at);
            heap.push(Reverse((at, n)));
        }
    };
    for (s, m) in net.access_stops(o) {
        let walk = net.walk_time(m);
        for &(dep, tr, pos) in &departures[s] {
            let tau = dep - walk;
            if tau >= lo && tau <= hi {
                push(&mut heap, &mut best, Node::InTrip(tr, pos), dep);
            }
        }
    }
    while let Some(Reverse((at, node))) = heap.pop() {
        if best.get(&node).is_some_and(|&b| b < at) {
            continue;
        }
        match node {
            Node::Dest => return Some(at),
            Node::InTrip(tr, i) => {
                let v = net.trip(tr);
                if i + 1 < v.stops.len() {
                    if i + 2 < v.stops.len() {
                        push(&mut heap, &mut best, Node::InTrip(tr, i + 1), v.dep[i + 1]);
                    }
                    push(&mut heap, &mut best, Node::AtStop(v.stops[i + 1], true), v.arr[i + 1]);
                }
            }
            Node::AtStop(s, by_ride) => {
                for &(dep, tr, pos) in &departures[s] {
                    if dep >= at {
                        push(&mut heap, &mut best, Node::InTrip(tr, pos), dep);
                    }
                }
                if by_ride {
                    for &(q, m) in net.footpaths(s) {
                        push(&mut heap, &mut best, Node::AtStop(q, false), at + net.walk_time(m));
                    }
                }
                if let Some(&m) = egress.get(&s) {
                    push(&mut heap, &mut best, Node::Dest, at + net.walk_time(m));
                }
            }
        }
    }
    None
}

pub const CORRIDOR_SPACING_M: f64 = 1200.0;
pub const CORRIDOR_RUN_S: i32 = 120;
pub const CORRIDOR_DWELL_S: i32 = 20;

pub fn corridor_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2023, 5, 9).unwrap()
}

pub fn corridor_clock() -> ServiceClock {
    ServiceClock::new(7200)
}

/// Six stops 1200 m apart on a straight east-bound line. Brigade 1 of line 10
/// runs out, back and out again from 08:00; brigade 2 has one trip at 12:00.
pub fn corridor_timetable() -> Timetable {
    let origin = LatLon::new(52.2, 21.0);
    let stops: Vec<Stop> = (0..6)
        .map(|i| Stop {
            id: format!("C{i}"),
            name: format!("Corridor {i}"),
            pos: destination(origin, 90.0, i as f64 * CORRIDOR_SPACING_M),
            kind: VehicleKind::Bus,
        })
        .collect();
    let make = |id: &str, block: &str, start: i32, reverse: bool| {
        let order: Vec<usize> = if reverse { (0..6).rev().collect() } else { (0..6).collect() };
        let mut t = start;
        let stop_times = order
            .iter()
            .enumerate()
            .map(|(k, &s)| {
                if k > 0 {
                    t += CORRIDOR_RUN_S;
                }
                let dwell = if k == 0 || k == 5 { 0 } else { CORRIDOR_DWELL_S };
                let st = TripStop { stop_id: format!("C{s}"), time: StopTime { arrival: t, departure: t + dwell, sequence: k as u32 + 1 } };
                t += dwell;
                st
            })
            .collect();
        TransitTrip { id: id.into(), route_id: "R10".into(), service_id: "wk".into(), block_id: Some(block.into()), stop_times }
    };
    let trips = vec![
        make("t1", "1", 8 * 3600, false),
        make("t2", "1", 8 * 3600 + 1200, true),
        make("t3", "1", 8 * 3600 + 2400, false),
        make("t4", "2", 12 * 3600, false),
    ];
    let routes = vec![Route { id: "R10".into(), short_name: "10".into(), kind: VehicleKind::Bus }];
    Timetable::new(stops, routes, trips, Vec::new(), Provenance::Planned).unwrap()
}

/// Waypoints of a block's trips with every stop shifted by the trip's delay.
pub fn block_waypoints(tt: &Timetable, trip_ids: &[&str], delays: &[Epoch], midnight: Epoch) -> Vec<Waypoint> {
    let mut out = Vec::new();
    for (id, delay) in trip_ids.iter().zip(delays) {
        let trip = tt.trip(id).unwrap();
        for st in &trip.stop_times {
            out.push(Waypoint {
                pos: tt.stop(&st.stop_id).unwrap().pos,
                arrive: midnight + st.time.arrival as Epoch + delay,
                depart: midnight + st.time.departure as Epoch + delay,
            });
        }
    }
    out
}

pub fn to_records(samples: &[(Epoch, LatLon)], line: &str, brigade: &str) -> Vec<VehicleLocation> {
    samples
        .iter()
        .map(|&(epoch, pos)| VehicleLocation { epoch, line: line.into(), brigade: brigade.into(), pos })
        .collect()
}

/// Brigade 1 of the corridor with one delay per trip, sampled every 5 s
/// starting `phase` seconds after 07:50.
pub fn corridor_trace(tt: &Timetable, delays: [Epoch; 3], halts: &[Halt], phase: Epoch) -> Vec<VehicleLocation> {
    let midnight = corridor_clock().midnight(corridor_date());
    let wps = block_waypoints(tt, &["t1", "t2", "t3"], &delays, midnight);
    let from = midnight + 7 * 3600 + 50 * 60 + phase;
    let to = midnight + 9 * 3600;
    to_records(&sample_trace(&wps, halts, from, to, 5), "10", "1")
}

/// A week of survey days with 60 respondents.
pub fn small_city_spec(seed: u64) -> CitySpec {
    let mut spec = CitySpec { seed, ..CitySpec::default() };
    spec.survey.respondents = 60;
    spec.survey.weekdays = 5;
    spec
}

/// Generates a city under `dir`, ingests its traces and rebuilds the real feeds.
pub fn prepared_city(dir: &std::path::Path, spec: &CitySpec) -> (RunConfig, CityReport) {
    let report = generate_city(spec, dir).unwrap();
    let cfg = RunConfig::load(dir.join("config.toml"), &[]).unwrap();
    run_ingest(&cfg, &dir.join("traces.csv")).unwrap();
    run_build_real(&cfg, &[]).unwrap();
    (cfg, report)
}

/// Instance CSV as a header plus rows of raw fields.
pub fn read_csv(path: &std::path::Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

const NAME_PARTS: [&str; 8] = ["Plac", "Rondo, Zachód", "\"Dworzec\"", "Łódzka", "Al. 3 Maja", "O'Hare", "Most", "Kino 'Wisła'"];

/// Random planned feed with awkward stop names, for serialization checks.
pub fn random_feed(seed: u64, n_stops: usize, n_trips: usize, with_calendar: bool) -> Timetable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stops: Vec<Stop> = (0..n_stops)
        .map(|i| Stop {
            id: format!("st{i}_{}", rng.gen_range(0..1000)),
            name: format!("{} {}", NAME_PARTS[rng.gen_range(0..NAME_PARTS.len())], i),
            pos: LatLon::new(rng.gen_range(-89.9..89.9), rng.gen_range(-179.9..179.9)),
            kind: VehicleKind::ALL[rng.gen_range(0..4)],
        })
        .collect();
    let routes: Vec<Route> = (0..rng.gen_range(1..5))
        .map(|i| Route { id: format!("r{i}"), short_name: format!("{}", rng.gen_range(1..600)), kind: VehicleKind::ALL[rng.gen_range(0..4)] })
        .collect();
    let services: Vec<(String, ServiceCalendar)> = if with_calendar {
        (0..rng.gen_range(1..3))
            .map(|i| {
                let start = NaiveDate::from_ymd_opt(2023, 1, 1).unwrap() + chrono::Duration::days(rng.gen_range(0..200));
                let weekdays = std::array::from_fn(|_| rng.gen_bool(0.6));
                (format!("svc{i}"), ServiceCalendar { weekdays, start, end: start + chrono::Duration::days(rng.gen_range(0..90)) })
            })
            .collect()
    } else {
        Vec::new()
    };
    let trips = (0..n_trips)
        .map(|i| {
            let len = rng.gen_range(2..=n_stops.min(8));
            let mut t = rng.gen_range(4 * 3600..26 * 3600);
            let mut seq = 0;
            let stop_times = (0..len)
                .map(|_| {
                    seq += rng.gen_range(1..4);
                    t += rng.gen_range(30..400);
                    let arrival = t;
                    t += rng.gen_range(0..40);
                    TripStop { stop_id: stops[rng.gen_range(0..n_stops)].id.clone(), time: StopTime { arrival, departure: t, sequence: seq } }
                })
                .collect();
            TransitTrip {
                id: format!("trip{i}"),
                route_id: routes[rng.gen_range(0..routes.len())].id.clone(),
                service_id: if services.is_empty() { "all".into() } else { services[rng.gen_range(0..services.len())].0.clone() },
                block_id: rng.gen_bool(0.7).then(|| format!("{}", rng.gen_range(1..20))),
                stop_times,
            }
        })
        .collect();
    Timetable::new(stops, routes, trips, services, Provenance::Planned).unwrap()
}

pub const MODE_COLUMNS: [(&str, &str); 5] =
    [("TransitReal", "Duration_TRANSIT_REAL"), ("Transit", "Duration_TRANSIT"), ("Cycle", "Duration_CYCLE"), ("Walk", "Duration_WALK"), ("Car", "Duration_CAR")];

/// Operand columns and kind of a DIFF name, decoded independently of the library.
pub fn decode_diff(name: &str) -> (String, String, bool) {
    let core = name.strip_suffix("_DIFF").unwrap();
    let (stat, core) = ["min", "avg"].iter().find_map(|p| core.strip_prefix(p).map(|c| (*p, c))).unwrap_or(("", core));
    let (ratio, pair) = match core.strip_prefix("DurationRatio") {
        Some(p) => (true, p),
        None => (false, core.strip_prefix("DurationDifference").unwrap()),
    };
    for (a, ca) in MODE_COLUMNS {
        for (b, cb) in MODE_COLUMNS {
            if a != b && pair == format!("{a}To{b}") {
                let col = |c: &str| if c.contains("TRANSIT") { format!("{stat}{c}") } else { c.to_string() };
                return (col(ca), col(cb), ratio);
            }
        }
    }
    panic!("undecodable {name}")
}

/// Expected DIFF value from its two operands.
pub fn diff_oracle(a: f64, b: f64, ratio: bool, sentinel: f64) -> f64 {
    if a == sentinel || b == sentinel || (ratio && b == 0.0) {
        sentinel
    } else if ratio {
        a / b
    } else {
        a - b
    }
}
