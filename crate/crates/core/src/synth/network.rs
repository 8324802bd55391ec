use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geodesy::{destination, haversine_m, LatLon};
use crate::gtfs::{Provenance, Route, Stop, StopTime, Timetable, TransitTrip, TripStop, VehicleKind};
use crate::router::{ModeSet, StreetEdge, StreetGraph};

/// Rectangular street grid with Manhattan blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub spacing_m: f64,
    pub origin: LatLon,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { rows: 10, cols: 10, spacing_m: 300.0, origin: LatLon::new(52.2, 21.0) }
    }
}

impl GridSpec {
    pub fn node_index(&self, r: usize, c: usize) -> usize {
        r * self.cols + c
    }

    pub fn node_pos(&self, r: usize, c: usize) -> LatLon {
        let north = destination(self.origin, 0.0, r as f64 * self.spacing_m);
        destination(north, 90.0, c as f64 * self.spacing_m)
    }

    pub fn width_m(&self) -> f64 {
        (self.cols - 1) as f64 * self.spacing_m
    }

    pub fn height_m(&self) -> f64 {
        (self.rows - 1) as f64 * self.spacing_m
    }

    /// Point at metric offsets (east, north) from the grid origin.
    pub fn point(&self, east_m: f64, north_m: f64) -> LatLon {
        destination(destination(self.origin, 0.0, north_m), 90.0, east_m)
    }

    pub fn contains(&self, p: LatLon) -> bool {
        let sw = self.node_pos(0, 0);
        let ne = self.node_pos(self.rows - 1, self.cols - 1);
        p.lat >= sw.lat && p.lat <= ne.lat && p.lon >= sw.lon && p.lon <= ne.lon
    }
}

/// Grid streets open to every mode. Every `arterial_every`-th row and column
/// carries a 13.9 m/s car speed; other edges use the default car speed.
pub fn grid_street_graph(spec: &GridSpec, arterial_every: usize) -> StreetGraph {
    let mut nodes = Vec::with_capacity(spec.rows * spec.cols);
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            nodes.push((format!("n{r}_{c}"), spec.node_pos(r, c)));
        }
    }
    let mut edges = Vec::new();
    let arterial = |i: usize| arterial_every > 0 && i.is_multiple_of(arterial_every);
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let a = spec.node_index(r, c);
            let mut push = |b: usize, fast: bool| {
                let length_m = haversine_m(nodes[a].1, nodes[b].1);
                edges.push(StreetEdge {
                    from: a,
                    to: b,
                    length_m,
                    modes: ModeSet::ALL,
                    elevation_gain_m: 0.0,
                    car_speed_mps: fast.then_some(13.9),
                });
            };
            if c + 1 < spec.cols {
                push(spec.node_index(r, c + 1), arterial(r));
            }
            if r + 1 < spec.rows {
                push(spec.node_index(r + 1, c), arterial(c));
            }
        }
    }
    StreetGraph::new(nodes, edges).expect("grid graph is valid")
}

/// Random network used for routing checks: `n_stops` stops on grid nodes and
/// `n_lines` lines running both directions between 06:00 and 10:00.
/// Roughly one trip in ten runs express and may overtake the trip before it.
pub fn random_transit_city(seed: u64, n_stops: usize, n_lines: usize) -> (GridSpec, StreetGraph, Timetable) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = GridSpec { rows: 12, cols: 12, spacing_m: 250.0, origin: LatLon::new(52.2, 21.0) };
    let graph = grid_street_graph(&spec, 4);
    let mut cells: Vec<(usize, usize)> = (0..spec.rows).flat_map(|r| (0..spec.cols).map(move |c| (r, c))).collect();
    cells.shuffle(&mut rng);
    cells.truncate(n_stops);
    let kinds = [VehicleKind::Bus, VehicleKind::Tram, VehicleKind::Metro];
    let stops: Vec<Stop> = cells
        .iter()
        .enumerate()
        .map(|(i, &(r, c))| Stop { id: format!("s{i}"), name: format!("Stop {i}"), pos: spec.node_pos(r, c), kind: VehicleKind::Bus })
        .collect();

    let mut routes = Vec::new();
    let mut trips = Vec::new();
    let mut covered = vec![false; n_stops];
    for l in 0..n_lines {
        let kind = kinds[l % kinds.len()];
        routes.push(Route { id: format!("L{l}"), short_name: format!("{}", l + 1), kind });
        // greedy nearest-neighbour path from a random start, preferring uncovered stops
        let len = rng.gen_range(8..=15).min(n_stops);
        let mut seq = vec![rng.gen_range(0..n_stops)];
        while seq.len() < len {
            let last = stops[*seq.last().unwrap()].pos;
            let mut cand: Vec<(f64, usize)> = (0..n_stops)
                .filter(|s| !seq.contains(s))
                .map(|s| (haversine_m(last, stops[s].pos) * if covered[s] { 1.5 } else { 1.0 }, s))
                .collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0));
            let pick = cand[rng.gen_range(0..cand.len().min(3))].1;
            seq.push(pick);
        }
        for &s in &seq {
            covered[s] = true;
        }
        let speed = match kind {
            VehicleKind::Metro => 12.0,
            VehicleKind::Tram => 7.0,
            _ => 8.0,
        };
        let headway = rng.gen_range(300..=900);
        for (dir, stops_dir) in [seq.clone(), seq.iter().rev().copied().collect::<Vec<_>>()].into_iter().enumerate() {
            let mut start = 6 * 3600 + rng.gen_range(0..headway);
            let mut n = 0;
            while start < 10 * 3600 {
                let express = rng.gen_bool(0.1);
                let factor = if express { 0.6 } else { 1.0 };
                let mut t = start;
                let mut stop_times = Vec::with_capacity(stops_dir.len());
                for (i, &s) in stops_dir.iter().enumerate() {
                    if i > 0 {
                        let d = haversine_m(stops[stops_dir[i - 1]].pos, stops[s].pos);
                        t += ((d / speed) * factor).ceil() as i32 + 1;
                    }
                    let dwell = if i == 0 || i + 1 == stops_dir.len() { 0 } else { rng.gen_range(0..=30) };
                    stop_times.push(TripStop {
                        stop_id: stops[s].id.clone(),
                        time: StopTime { arrival: t, departure: t + dwell, sequence: i as u32 + 1 },
                    });
                    t += dwell;
                }
                trips.push(TransitTrip {
                    id: format!("L{l}_{dir}_{n}"),
                    route_id: format!("L{l}"),
                    service_id: "all".into(),
                    block_id: Some(format!("{}", n % 4 + 1)),
                    stop_times,
                });
                n += 1;
                start += headway;
            }
        }
    }
    let mut stops = stops;
    for s in stops.iter_mut() {
        let kind = trips
            .iter()
            .find(|t| t.stop_times.iter().any(|st| st.stop_id == s.id))
            .and_then(|t| routes.iter().find(|r| r.id == t.route_id))
            .map(|r| r.kind);
        if let Some(k) = kind {
            s.kind = k;
        }
    }
    let tt = Timetable::new(stops, routes, trips, Vec::new(), Provenance::Planned).expect("generated timetable is valid");
    (spec, graph, tt)
}
