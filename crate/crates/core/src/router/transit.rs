use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::street::{StreetGraph, StreetMode};
use super::RouterError;
use crate::clock::{Epoch, ServiceClock};
use crate::geodesy::{haversine_m, LatLon};
use crate::gtfs::{Timetable, VehicleKind};

/// Candidate connections must depart within [t - delta_s, t + delta_f].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModeChoiceWindow {
    pub delta_s: i64,
    pub delta_f: i64,
}

impl ModeChoiceWindow {
    pub fn new(delta_s: i64, delta_f: i64) -> Result<Self, RouterError> {
        if delta_s < 0 || delta_f < 0 || delta_s + delta_f == 0 {
            return Err(RouterError::InvalidWindow { delta_s, delta_f });
        }
        Ok(Self { delta_s, delta_f })
    }
}

impl Default for ModeChoiceWindow {
    fn default() -> Self {
        Self { delta_s: 300, delta_f: 600 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitParams {
    pub walk_mps: f64,
    /// Longest walk between the origin or destination and a stop.
    pub max_access_m: f64,
    /// Longest walk between two stops when transferring.
    pub transfer_radius_m: f64,
    pub max_transfers: usize,
}

impl Default for TransitParams {
    fn default() -> Self {
        Self { walk_mps: 1.25, max_access_m: 1000.0, transfer_radius_m: 300.0, max_transfers: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LegMode {
    Walk,
    Bus,
    Tram,
    Metro,
    Rail,
}

impl From<VehicleKind> for LegMode {
    fn from(k: VehicleKind) -> Self {
        match k {
            VehicleKind::Bus => LegMode::Bus,
            VehicleKind::Tram => LegMode::Tram,
            VehicleKind::Metro => LegMode::Metro,
            VehicleKind::Rail => LegMode::Rail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub mode: LegMode,
    pub line: Option<String>,
    pub trip_id: Option<String>,
    pub board_stop: Option<String>,
    pub alight_stop: Option<String>,
    /// Stops passed on a vehicle leg, boarding and alighting stop included.
    pub stops: Vec<String>,
    pub depart: Epoch,
    pub arrive: Epoch,
    pub distance_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Connection {
    pub legs: Vec<Leg>,
    pub departure: Epoch,
    pub arrival: Epoch,
    pub total_duration_s: i64,
    pub total_distance_m: f64,
    pub walk_distance_m: f64,
    pub wait_time_s: i64,
    pub transfers: usize,
    /// Fraction of in-vehicle time per vehicle kind; kinds not used are absent.
    pub mode_share: BTreeMap<VehicleKind, f64>,
}

impl Connection {
    pub fn vehicle_legs(&self) -> impl Iterator<Item = &Leg> {
        self.legs.iter().filter(|l| l.mode != LegMode::Walk)
    }
}

#[derive(Debug, Clone)]
struct NetTrip {
    id: String,
    line: String,
    kind: VehicleKind,
    pattern: usize,
    arr: Vec<i64>,
    dep: Vec<i64>,
    cum_m: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Pattern {
    stops: Vec<usize>,
    /// Trip indices ordered by departure from the first stop.
    trips: Vec<usize>,
    /// No trip overtakes another anywhere along the pattern.
    fifo: bool,
}

/// Public view of one trip for external checks.
#[derive(Debug, Clone, PartialEq)]
pub struct TripView<'a> {
    pub id: &'a str,
    pub stops: &'a [usize],
    pub arr: &'a [i64],
    pub dep: &'a [i64],
}

/// A timetable for one service date joined with the walking network.
/// Times are seconds relative to the date's midnight; trips of the previous
/// service day that run past midnight are included with shifted times.
#[derive(Debug, Clone)]
pub struct TransitNetwork {
    graph: Arc<StreetGraph>,
    params: TransitParams,
    date: NaiveDate,
    midnight: Epoch,
    stop_ids: Vec<String>,
    stop_pos: Vec<LatLon>,
    stop_snap: Vec<Option<(usize, f64)>>,
    node_stops: HashMap<usize, Vec<usize>>,
    trips: Vec<NetTrip>,
    patterns: Vec<Pattern>,
    stop_patterns: Vec<Vec<(usize, usize)>>,
    footpaths: Vec<Vec<(usize, f64)>>,
}

const INF: i64 = i64::MAX / 4;

#[derive(Debug, Clone, Copy)]
struct Ride {
    trip: usize,
    board: usize,
    alight: usize,
}

#[derive(Debug, Clone, Copy)]
enum How {
    None,
    Access(f64),
    Carry,
    Ride(Ride),
    Walk { from: usize, meters: f64 },
}

impl TransitNetwork {
    pub fn build(
        tt: &Timetable,
        graph: Arc<StreetGraph>,
        date: NaiveDate,
        clock: &ServiceClock,
        params: TransitParams,
    ) -> Self {
        let stop_ids: Vec<String> = tt.stops.iter().map(|s| s.id.clone()).collect();
        let stop_pos: Vec<LatLon> = tt.stops.iter().map(|s| s.pos).collect();
        let stop_snap: Vec<Option<(usize, f64)>> = stop_pos
            .iter()
            .map(|&p| graph.snap(p, StreetMode::Walk).filter(|&(_, d)| d <= params.max_access_m))
            .collect();
        let mut node_stops: HashMap<usize, Vec<usize>> = HashMap::new();
        for (s, snap) in stop_snap.iter().enumerate() {
            if let Some((n, _)) = snap {
                node_stops.entry(*n).or_default().push(s);
            }
        }

        let mut trips = Vec::new();
        let mut pattern_index: HashMap<(String, Vec<usize>), usize> = HashMap::new();
        let mut patterns: Vec<Pattern> = Vec::new();
        let yesterday = date - Duration::days(1);
        let today = tt.trips_on(date).map(|t| (t, 0i64));
        let spill = tt.trips_on(yesterday).filter(|t| t.last_arrival().unwrap_or(0) > 86_400).map(|t| (t, -86_400i64));
        for (t, shift) in today.chain(spill) {
            if t.stop_times.len() < 2 {
                continue;
            }
            let route = tt.route_of(t);
            let stops: Vec<usize> = t.stop_times.iter().map(|st| tt.stop_idx(&st.stop_id).expect("validated")).collect();
            let mut cum_m = vec![0.0];
            for w in stops.windows(2) {
                let last = *cum_m.last().unwrap();
                cum_m.push(last + haversine_m(stop_pos[w[0]], stop_pos[w[1]]));
            }
            let key = (route.id.clone(), stops.clone());
            let pattern = *pattern_index.entry(key).or_insert_with(|| {
                patterns.push(Pattern { stops: stops.clone(), trips: Vec::new(), fifo: true });
                patterns.len() - 1
            });
            patterns[pattern].trips.push(trips.len());
            trips.push(NetTrip {
                id: t.id.clone(),
                line: route.short_name.clone(),
                kind: route.kind,
                pattern,
                arr: t.stop_times.iter().map(|st| st.time.arrival as i64 + shift).collect(),
                dep: t.stop_times.iter().map(|st| st.time.departure as i64 + shift).collect(),
                cum_m,
            });
        }
        for p in patterns.iter_mut() {
            p.trips.sort_by(|&a, &b| trips[a].dep[0].cmp(&trips[b].dep[0]).then_with(|| trips[a].id.cmp(&trips[b].id)));
            p.fifo = p.trips.windows(2).all(|w| {
                let (a, b) = (&trips[w[0]], &trips[w[1]]);
                (0..a.dep.len()).all(|i| a.dep[i] <= b.dep[i] && a.arr[i] <= b.arr[i])
            });
        }
        let mut stop_patterns = vec![Vec::new(); stop_ids.len()];
        for (pi, p) in patterns.iter().enumerate() {
            for (pos, &s) in p.stops.iter().enumerate() {
                stop_patterns[s].push((pi, pos));
            }
        }

        let mut net = Self {
            graph,
            params,
            date,
            midnight: clock.midnight(date),
            stop_ids,
            stop_pos,
            stop_snap,
            node_stops,
            trips,
            patterns,
            stop_patterns,
            footpaths: Vec::new(),
        };
        net.footpaths = (0..net.stop_ids.len())
            .map(|s| {
                let mut fp: Vec<(usize, f64)> = net
                    .walk_to_stops(net.stop_pos[s], net.params.transfer_radius_m)
                    .into_iter()
                    .filter(|&(q, _)| q != s)
                    .collect();
                fp.sort_by_key(|a| a.0);
                fp
            })
            .collect();
        net
    }

    pub fn date(&self) -> NaiveDate {
        self.date
    }

    pub fn midnight(&self) -> Epoch {
        self.midnight
    }

    pub fn params(&self) -> &TransitParams {
        &self.params
    }

    pub fn stop_count(&self) -> usize {
        self.stop_ids.len()
    }

    pub fn stop_id(&self, s: usize) -> &str {
        &self.stop_ids[s]
    }

    pub fn trip_count(&self) -> usize {
        self.trips.len()
    }

    pub fn trip(&self, t: usize) -> TripView<'_> {
        let tr = &self.trips[t];
        TripView { id: &tr.id, stops: &self.patterns[tr.pattern].stops, arr: &tr.arr, dep: &tr.dep }
    }

    /// Walking transfers from stop `s` as (stop, metres).
    pub fn footpaths(&self, s: usize) -> &[(usize, f64)] {
        &self.footpaths[s]
    }

    /// Whole seconds needed to walk `meters`.
    pub fn walk_time(&self, meters: f64) -> i64 {
        (meters / self.params.walk_mps).ceil() as i64
    }

    /// Stops reachable on foot from `p` within `max_m`, with the walking distance.
    fn walk_to_stops(&self, p: LatLon, max_m: f64) -> Vec<(usize, f64)> {
        let Some((node, snap_m)) = self.graph.snap(p, StreetMode::Walk) else { return Vec::new() };
        if snap_m > max_m {
            return Vec::new();
        }
        let mut best: BTreeMap<usize, f64> = BTreeMap::new();
        for (n, d) in self.graph.walk_distances(node, max_m - snap_m) {
            for &s in self.node_stops.get(&n).map(Vec::as_slice).unwrap_or(&[]) {
                let total = snap_m + d + self.stop_snap[s].expect("indexed stops are snapped").1;
                if total <= max_m {
                    let e = best.entry(s).or_insert(total);
                    *e = e.min(total);
                }
            }
        }
        best.into_iter().collect()
    }

    /// Stops within walking range of a point (also used for egress).
    pub fn access_stops(&self, p: LatLon) -> Vec<(usize, f64)> {
        self.walk_to_stops(p, self.params.max_access_m)
    }

    fn boardable(&self, k: usize, dep: i64, label: i64) -> bool {
        if k == 1 {
            dep == label
        } else {
            dep >= label
        }
    }

    /// Round-based search for journeys leaving the origin exactly at `tau`
    /// (first boarding minus the access walk). Returns one journey per
    /// number of vehicle legs that improves the arrival time.
    fn search(&self, access: &[(usize, f64)], egress: &HashMap<usize, f64>, tau: i64) -> Vec<Connection> {
        let n = self.stop_ids.len();
        let rounds = self.params.max_transfers + 1;
        let mut label: Vec<Vec<i64>> = vec![vec![INF; n]; rounds + 1];
        let mut how: Vec<Vec<How>> = vec![vec![How::None; n]; rounds + 1];
        let mut ride_label: Vec<Vec<(i64, Option<Ride>)>> = vec![vec![(INF, None); n]; rounds + 1];
        let mut marked: BTreeSet<usize> = BTreeSet::new();
        for &(s, m) in access {
            let t = tau + self.walk_time(m);
            if t < label[0][s] {
                label[0][s] = t;
                how[0][s] = How::Access(m);
                marked.insert(s);
            }
        }
        let mut ride_best = vec![INF; n];
        let mut best_target = INF;
        let mut found: Vec<(usize, usize)> = Vec::new();

        for k in 1..=rounds {
            if marked.is_empty() {
                break;
            }
            if k >= 2 {
                label[k] = label[k - 1].clone();
                how[k] = vec![How::Carry; n];
            }
            let mut queue: BTreeMap<usize, usize> = BTreeMap::new();
            for &s in &marked {
                for &(p, pos) in &self.stop_patterns[s] {
                    let e = queue.entry(p).or_insert(pos);
                    *e = (*e).min(pos);
                }
            }
            let mut ride_marked: BTreeSet<usize> = BTreeSet::new();
            let mut improved: BTreeSet<usize> = BTreeSet::new();
            for (&pi, &start) in &queue {
                let pattern = &self.patterns[pi];
                if pattern.fifo {
                    let mut current: Option<(usize, usize)> = None; // (index in pattern.trips, board pos)
                    for i in start..pattern.stops.len() {
                        let s = pattern.stops[i];
                        if let Some((ci, b)) = current {
                            let t = pattern.trips[ci];
                            let a = self.trips[t].arr[i];
                            let r = Ride { trip: t, board: b, alight: i };
                            if a < ride_best[s].min(best_target) {
                                ride_best[s] = a;
                                ride_label[k][s] = (a, Some(r));
                                ride_marked.insert(s);
                            }
                            if a < label[k][s].min(best_target) {
                                label[k][s] = a;
                                how[k][s] = How::Ride(r);
                                improved.insert(s);
                            }
                        }
                        let prev = label[k - 1][s];
                        if prev >= INF || i + 1 == pattern.stops.len() || (k >= 2 && matches!(how[k - 1][s], How::Access(_))) {
                            continue;
                        }
                        let trips = &pattern.trips;
                        let first = trips.partition_point(|&t| self.trips[t].dep[i] < prev);
                        if first < trips.len()
                            && self.boardable(k, self.trips[trips[first]].dep[i], prev)
                            && current.is_none_or(|(ci, _)| first < ci)
                        {
                            current = Some((first, i));
                        }
                    }
                } else {
                    for &t in &pattern.trips {
                        let trip = &self.trips[t];
                        let mut board: Option<usize> = None;
                        for i in start..pattern.stops.len() {
                            let s = pattern.stops[i];
                            if let Some(b) = board {
                                let a = trip.arr[i];
                                let r = Ride { trip: t, board: b, alight: i };
                                if a < ride_best[s].min(best_target) {
                                    ride_best[s] = a;
                                    ride_label[k][s] = (a, Some(r));
                                    ride_marked.insert(s);
                                }
                                if a < label[k][s].min(best_target) {
                                    label[k][s] = a;
                                    how[k][s] = How::Ride(r);
                                    improved.insert(s);
                                }
                            } else {
                                let prev = label[k - 1][s];
                                let from_access = k >= 2 && matches!(how[k - 1][s], How::Access(_));
                                if prev < INF && !from_access && i + 1 < pattern.stops.len() && self.boardable(k, trip.dep[i], prev) {
                                    board = Some(i);
                                }
                            }
                        }
                    }
                }
            }
            for &p in &ride_marked {
                let base = ride_label[k][p].0;
                for &(q, m) in &self.footpaths[p] {
                    let t = base + self.walk_time(m);
                    if t < label[k][q].min(best_target) {
                        label[k][q] = t;
                        how[k][q] = How::Walk { from: p, meters: m };
                        improved.insert(q);
                    }
                }
            }
            let mut round_best: Option<(i64, usize)> = None;
            for &q in &improved {
                if let Some(&m) = egress.get(&q) {
                    let t = label[k][q] + self.walk_time(m);
                    if t < best_target && round_best.is_none_or(|(b, _)| t < b) {
                        round_best = Some((t, q));
                    }
                }
            }
            if let Some((t, q)) = round_best {
                best_target = t;
                found.push((k, q));
            }
            marked = improved;
        }

        found
            .into_iter()
            .map(|(k, q)| self.reconstruct(&how, &ride_label, k, q, egress[&q]))
            .collect()
    }

    fn reconstruct(&self, how: &[Vec<How>], ride_label: &[Vec<(i64, Option<Ride>)>], k: usize, q: usize, egress_m: f64) -> Connection {
        enum Step {
            Ride(Ride),
            Walk { from: usize, to: usize, meters: f64 },
        }
        let mut steps: Vec<Step> = Vec::new();
        let (mut k, mut s) = (k, q);
        let access_m;
        loop {
            match how[k][s] {
                How::Carry => k -= 1,
                How::Walk { from, meters } => {
                    steps.push(Step::Walk { from, to: s, meters });
                    let r = ride_label[k][from].1.expect("footpaths start from ride arrivals");
                    steps.push(Step::Ride(r));
                    s = self.patterns[self.trips[r.trip].pattern].stops[r.board];
                    k -= 1;
                }
                How::Ride(r) => {
                    steps.push(Step::Ride(r));
                    s = self.patterns[self.trips[r.trip].pattern].stops[r.board];
                    k -= 1;
                }
                How::Access(m) => {
                    access_m = m;
                    break;
                }
                How::None => unreachable!("reconstruction reached an unlabelled stop"),
            }
        }
        steps.reverse();

        let first = match steps.first() {
            Some(Step::Ride(r)) => *r,
            _ => unreachable!("journeys start with a vehicle leg"),
        };
        let board_dep = self.trips[first.trip].dep[first.board];
        let departure = board_dep - self.walk_time(access_m);
        let first_stop = self.patterns[self.trips[first.trip].pattern].stops[first.board];

        let mut legs = Vec::new();
        let epoch = |t: i64| self.midnight + t;
        legs.push(Leg {
            mode: LegMode::Walk,
            line: None,
            trip_id: None,
            board_stop: None,
            alight_stop: Some(self.stop_ids[first_stop].clone()),
            stops: Vec::new(),
            depart: epoch(departure),
            arrive: epoch(departure + self.walk_time(access_m)),
            distance_m: access_m,
        });
        let mut cursor = departure + self.walk_time(access_m);
        let mut last_stop = first_stop;
        for step in &steps {
            match *step {
                Step::Ride(r) => {
                    let trip = &self.trips[r.trip];
                    let stops = &self.patterns[trip.pattern].stops;
                    legs.push(Leg {
                        mode: trip.kind.into(),
                        line: Some(trip.line.clone()),
                        trip_id: Some(trip.id.clone()),
                        board_stop: Some(self.stop_ids[stops[r.board]].clone()),
                        alight_stop: Some(self.stop_ids[stops[r.alight]].clone()),
                        stops: stops[r.board..=r.alight].iter().map(|&s| self.stop_ids[s].clone()).collect(),
                        depart: epoch(trip.dep[r.board]),
                        arrive: epoch(trip.arr[r.alight]),
                        distance_m: trip.cum_m[r.alight] - trip.cum_m[r.board],
                    });
                    cursor = trip.arr[r.alight];
                    last_stop = stops[r.alight];
                }
                Step::Walk { from, to, meters } => {
                    legs.push(Leg {
                        mode: LegMode::Walk,
                        line: None,
                        trip_id: None,
                        board_stop: Some(self.stop_ids[from].clone()),
                        alight_stop: Some(self.stop_ids[to].clone()),
                        stops: Vec::new(),
                        depart: epoch(cursor),
                        arrive: epoch(cursor + self.walk_time(meters)),
                        distance_m: meters,
                    });
                    cursor += self.walk_time(meters);
                    last_stop = to;
                }
            }
        }
        legs.push(Leg {
            mode: LegMode::Walk,
            line: None,
            trip_id: None,
            board_stop: Some(self.stop_ids[last_stop].clone()),
            alight_stop: None,
            stops: Vec::new(),
            depart: epoch(cursor),
            arrive: epoch(cursor + self.walk_time(egress_m)),
            distance_m: egress_m,
        });
        summarize(legs)
    }

    /// Candidate connections from `o` to `d` departing within the window around `departure`.
    ///
    /// For every distinct departure time that reaches a boarding inside the
    /// window, journeys are Pareto-optimal on (arrival, transfers) among those
    /// leaving at that time. The union is sorted by arrival and truncated.
    pub fn plan_connections(&self, o: LatLon, d: LatLon, departure: Epoch, window: ModeChoiceWindow, max_results: usize) -> Vec<Connection> {
        let access = self.access_stops(o);
        let egress: HashMap<usize, f64> = self.access_stops(d).into_iter().collect();
        if access.is_empty() || egress.is_empty() {
            return Vec::new();
        }
        let t = departure - self.midnight;
        let (lo, hi) = (t - window.delta_s, t + window.delta_f);
        let mut taus: BTreeSet<i64> = BTreeSet::new();
        for &(s, m) in &access {
            let a = self.walk_time(m);
            for &(pi, pos) in &self.stop_patterns[s] {
                let pattern = &self.patterns[pi];
                if pos + 1 == pattern.stops.len() {
                    continue;
                }
                for &tr in &pattern.trips {
                    let tau = self.trips[tr].dep[pos] - a;
                    if tau >= lo && tau <= hi {
                        taus.insert(tau);
                    }
                }
            }
        }
        let mut seen: BTreeSet<String> = BTreeSet::new();
        let mut out: Vec<Connection> = Vec::new();
        for tau in taus {
            for c in self.search(&access, &egress, tau) {
                let dep = c.departure - self.midnight;
                if dep < lo || dep > hi {
                    continue;
                }
                if seen.insert(signature(&c)) {
                    out.push(c);
                }
            }
        }
        out.sort_by(|a, b| {
            (a.arrival, a.transfers, std::cmp::Reverse(a.departure))
                .cmp(&(b.arrival, b.transfers, std::cmp::Reverse(b.departure)))
                .then_with(|| signature(a).cmp(&signature(b)))
        });
        out.truncate(max_results);
        out
    }
}

fn signature(c: &Connection) -> String {
    let mut s = String::new();
    for l in &c.legs {
        s.push_str(&format!(
            "{:?}:{}:{}:{}:{}:{};",
            l.mode,
            l.trip_id.as_deref().unwrap_or(""),
            l.board_stop.as_deref().unwrap_or(""),
            l.alight_stop.as_deref().unwrap_or(""),
            l.depart,
            l.arrive
        ));
    }
    s
}

fn summarize(legs: Vec<Leg>) -> Connection {
    let departure = legs.first().map_or(0, |l| l.depart);
    let arrival = legs.last().map_or(0, |l| l.arrive);
    let mut wait = 0;
    for w in legs.windows(2) {
        wait += w[1].depart - w[0].arrive;
    }
    let walk: f64 = legs.iter().filter(|l| l.mode == LegMode::Walk).map(|l| l.distance_m).sum();
    let total: f64 = legs.iter().map(|l| l.distance_m).sum();
    let rides = legs.iter().filter(|l| l.mode != LegMode::Walk).count();
    let mut in_vehicle: BTreeMap<VehicleKind, f64> = BTreeMap::new();
    for l in legs.iter().filter(|l| l.mode != LegMode::Walk) {
        let kind = match l.mode {
            LegMode::Bus => VehicleKind::Bus,
            LegMode::Tram => VehicleKind::Tram,
            LegMode::Metro => VehicleKind::Metro,
            LegMode::Rail => VehicleKind::Rail,
            LegMode::Walk => unreachable!(),
        };
        *in_vehicle.entry(kind).or_default() += (l.arrive - l.depart) as f64;
    }
    let ivt: f64 = in_vehicle.values().sum();
    let mode_share = if ivt > 0.0 {
        in_vehicle.into_iter().map(|(k, v)| (k, v / ivt)).collect()
    } else {
        // zero-duration rides: share by leg count
        let mut counts: BTreeMap<VehicleKind, f64> = BTreeMap::new();
        for l in legs.iter() {
            if let Some(k) = match l.mode {
                LegMode::Bus => Some(VehicleKind::Bus),
                LegMode::Tram => Some(VehicleKind::Tram),
                LegMode::Metro => Some(VehicleKind::Metro),
                LegMode::Rail => Some(VehicleKind::Rail),
                LegMode::Walk => None,
            } {
                *counts.entry(k).or_default() += 1.0 / rides as f64;
            }
        }
        counts
    };
    Connection {
        departure,
        arrival,
        total_duration_s: arrival - departure,
        total_distance_m: total,
        walk_distance_m: walk,
        wait_time_s: wait,
        transfers: rides.saturating_sub(1),
        mode_share,
        legs,
    }
}
