use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RouterError;
use crate::geodesy::{haversine_m, LatLon};
use crate::geojson::{read_features, Geometry};
use crate::spatial::PointGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreetMode {
    Walk,
    Cycle,
    Car,
}

impl StreetMode {
    pub const ALL: [StreetMode; 3] = [StreetMode::Walk, StreetMode::Cycle, StreetMode::Car];

    fn bit(self) -> u8 {
        match self {
            StreetMode::Walk => 1,
            StreetMode::Cycle => 2,
            StreetMode::Car => 4,
        }
    }
}

/// Subset of street modes permitted on an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ModeSet(u8);

impl ModeSet {
    pub const ALL: ModeSet = ModeSet(7);

    pub fn of(modes: &[StreetMode]) -> Self {
        ModeSet(modes.iter().fold(0, |acc, m| acc | m.bit()))
    }

    pub fn contains(self, m: StreetMode) -> bool {
        self.0 & m.bit() != 0
    }

    /// Parses `walk|cycle|car` style lists (`|`, `;`, `,` or spaces as separators).
    pub fn parse(s: &str) -> Option<Self> {
        let mut bits = 0;
        for tok in s.split(['|', ';', ',', ' ']).filter(|t| !t.is_empty()) {
            bits |= match tok.to_ascii_lowercase().as_str() {
                "walk" | "foot" => 1,
                "cycle" | "bike" | "bicycle" => 2,
                "car" => 4,
                _ => return None,
            };
        }
        (bits != 0).then_some(ModeSet(bits))
    }

    pub fn to_label(self) -> String {
        StreetMode::ALL
            .iter()
            .filter(|m| self.contains(**m))
            .map(|m| match m {
                StreetMode::Walk => "walk",
                StreetMode::Cycle => "cycle",
                StreetMode::Car => "car",
            })
            .collect::<Vec<_>>()
            .join("|")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Speeds {
    pub walk_mps: f64,
    pub cycle_mps: f64,
    /// Used on car edges without their own speed.
    pub car_mps: f64,
}

impl Default for Speeds {
    fn default() -> Self {
        Self { walk_mps: 1.25, cycle_mps: 4.0, car_mps: 11.1 }
    }
}

/// Undirected street edge. `elevation_gain_m` applies when travelling from
/// `from` to `to`; the reverse direction gains nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreetEdge {
    pub from: usize,
    pub to: usize,
    pub length_m: f64,
    pub modes: ModeSet,
    pub elevation_gain_m: f64,
    pub car_speed_mps: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RouteEstimate {
    /// Network distance between the snapped endpoints.
    pub distance_m: f64,
    pub duration_s: f64,
    pub elevation_gain_m: f64,
    /// Straight-line distance from the origin to its snapped node.
    pub access_m: f64,
    /// Straight-line distance from the snapped destination node to the destination.
    pub egress_m: f64,
}

#[derive(Debug, Clone)]
pub struct StreetGraph {
    ids: Vec<String>,
    positions: Vec<LatLon>,
    edges: Vec<StreetEdge>,
    adjacency: Vec<Vec<(usize, usize)>>,
    grid: PointGrid,
    node_modes: Vec<ModeSet>,
}

/// Largest distance between a query point and the node it snaps to.
pub const MAX_SNAP_M: f64 = 2_000.0;

#[derive(Clone, Copy, PartialEq)]
struct Queued {
    cost: f64,
    node: usize,
}

impl Eq for Queued {}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl StreetGraph {
    pub fn new(nodes: Vec<(String, LatLon)>, edges: Vec<StreetEdge>) -> Result<Self, RouterError> {
        let mut ids = Vec::with_capacity(nodes.len());
        let mut positions = Vec::with_capacity(nodes.len());
        for (id, p) in nodes {
            if !p.is_valid() {
                return Err(RouterError::InvalidGraph(format!("node {id} has invalid coordinates")));
            }
            ids.push(id);
            positions.push(p);
        }
        let mut adjacency = vec![Vec::new(); ids.len()];
        let mut node_modes = vec![ModeSet::default(); ids.len()];
        for (i, e) in edges.iter().enumerate() {
            if e.from >= ids.len() || e.to >= ids.len() {
                return Err(RouterError::InvalidGraph(format!("edge {i} references a missing node")));
            }
            if !(e.length_m > 0.0) {
                return Err(RouterError::InvalidGraph(format!("edge {i} has non-positive length")));
            }
            adjacency[e.from].push((e.to, i));
            adjacency[e.to].push((e.from, i));
            node_modes[e.from].0 |= e.modes.0;
            node_modes[e.to].0 |= e.modes.0;
        }
        let grid = PointGrid::new(positions.clone(), 0.005);
        Ok(Self { ids, positions, edges, adjacency, grid, node_modes })
    }

    /// Reads `nodes.csv` (`id,lat,lon`) and `edges.csv`
    /// (`u,v,length_m,modes[,elevation_gain_m][,car_speed_mps]`).
    pub fn from_csv(nodes_path: impl AsRef<Path>, edges_path: impl AsRef<Path>) -> Result<Self, RouterError> {
        let read = |p: &Path| -> Result<(csv::StringRecord, Vec<csv::StringRecord>), RouterError> {
            let wrap = |e: csv::Error| RouterError::Load(format!("{}: {e}", p.display()));
            let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_path(p).map_err(wrap)?;
            let h = r.headers().map_err(wrap)?.clone();
            let rows = r.records().collect::<Result<Vec<_>, _>>().map_err(wrap)?;
            Ok((h, rows))
        };
        let col = |h: &csv::StringRecord, name: &str| h.iter().position(|c| c == name);
        let bad = |file: &Path, row: usize| RouterError::Load(format!("{} row {row} is malformed", file.display()));

        let nodes_path = nodes_path.as_ref();
        let (h, rows) = read(nodes_path)?;
        let (ci, clat, clon) = (col(&h, "id"), col(&h, "lat"), col(&h, "lon"));
        let mut nodes = Vec::with_capacity(rows.len());
        let mut index = HashMap::new();
        for (r, rec) in rows.iter().enumerate() {
            let get = |c: Option<usize>| c.and_then(|c| rec.get(c));
            let (Some(id), Some(lat), Some(lon)) = (get(ci), get(clat).and_then(|s| s.parse().ok()), get(clon).and_then(|s| s.parse().ok()))
            else {
                return Err(bad(nodes_path, r + 2));
            };
            index.insert(id.to_string(), nodes.len());
            nodes.push((id.to_string(), LatLon::new(lat, lon)));
        }

        let edges_path = edges_path.as_ref();
        let (h, rows) = read(edges_path)?;
        let (cu, cv, clen, cmodes, celev, cspeed) =
            (col(&h, "u"), col(&h, "v"), col(&h, "length_m"), col(&h, "modes"), col(&h, "elevation_gain_m"), col(&h, "car_speed_mps"));
        let mut edges = Vec::with_capacity(rows.len());
        for (r, rec) in rows.iter().enumerate() {
            let get = |c: Option<usize>| c.and_then(|c| rec.get(c)).filter(|s| !s.is_empty());
            let from = get(cu).and_then(|s| index.get(s)).copied().ok_or_else(|| bad(edges_path, r + 2))?;
            let to = get(cv).and_then(|s| index.get(s)).copied().ok_or_else(|| bad(edges_path, r + 2))?;
            let length_m = match get(clen) {
                Some(s) => s.parse().map_err(|_| bad(edges_path, r + 2))?,
                None => haversine_m(nodes[from].1, nodes[to].1),
            };
            let modes = match get(cmodes) {
                Some(s) => ModeSet::parse(s).ok_or_else(|| bad(edges_path, r + 2))?,
                None => ModeSet::ALL,
            };
            let elevation_gain_m = get(celev).and_then(|s| s.parse().ok()).unwrap_or(0.0);
            let car_speed_mps = get(cspeed).and_then(|s| s.parse().ok());
            edges.push(StreetEdge { from, to, length_m, modes, elevation_gain_m, car_speed_mps });
        }
        Self::new(nodes, edges)
    }

    /// Writes the graph in the layout read by [`StreetGraph::from_csv`].
    pub fn write_csv(&self, nodes_path: impl AsRef<Path>, edges_path: impl AsRef<Path>) -> Result<(), RouterError> {
        fn wrap(p: &Path) -> impl Fn(csv::Error) -> RouterError + '_ {
            move |e| RouterError::Load(format!("{}: {e}", p.display()))
        }
        let np = nodes_path.as_ref();
        let mut w = csv::Writer::from_path(np).map_err(wrap(np))?;
        w.write_record(["id", "lat", "lon"]).map_err(wrap(np))?;
        for (id, p) in self.ids.iter().zip(&self.positions) {
            w.write_record([id.clone(), p.lat.to_string(), p.lon.to_string()]).map_err(wrap(np))?;
        }
        w.flush().map_err(|e| RouterError::Load(format!("{}: {e}", np.display())))?;
        let ep = edges_path.as_ref();
        let mut w = csv::Writer::from_path(ep).map_err(wrap(ep))?;
        w.write_record(["u", "v", "length_m", "modes", "elevation_gain_m", "car_speed_mps"]).map_err(wrap(ep))?;
        for e in &self.edges {
            w.write_record([
                self.ids[e.from].clone(),
                self.ids[e.to].clone(),
                e.length_m.to_string(),
                e.modes.to_label(),
                e.elevation_gain_m.to_string(),
                e.car_speed_mps.map(|v| v.to_string()).unwrap_or_default(),
            ])
            .map_err(wrap(ep))?;
        }
        w.flush().map_err(|e| RouterError::Load(format!("{}: {e}", ep.display())))
    }

    /// Reads a GeoJSON line layer; each consecutive coordinate pair becomes an
    /// edge and coincident coordinates share a node. Optional properties:
    /// `modes`, `car_speed_mps`.
    pub fn from_geojson(path: impl AsRef<Path>) -> Result<Self, RouterError> {
        let features = read_features(path).map_err(|e| RouterError::Load(e.to_string()))?;
        let mut index: HashMap<(u64, u64), usize> = HashMap::new();
        let mut nodes = Vec::new();
        let mut node_of = |p: LatLon, nodes: &mut Vec<(String, LatLon)>| {
            *index.entry((p.lat.to_bits(), p.lon.to_bits())).or_insert_with(|| {
                nodes.push((format!("n{}", nodes.len()), p));
                nodes.len() - 1
            })
        };
        let mut edges = Vec::new();
        for f in &features {
            let Geometry::LineString(pts) = &f.geometry else { continue };
            let modes = f.prop_str("modes").and_then(|s| ModeSet::parse(&s)).unwrap_or(ModeSet::ALL);
            let car_speed_mps = f.prop_f64("car_speed_mps");
            for w in pts.windows(2) {
                let length_m = haversine_m(w[0], w[1]);
                if length_m <= 0.0 {
                    continue;
                }
                let from = node_of(w[0], &mut nodes);
                let to = node_of(w[1], &mut nodes);
                edges.push(StreetEdge { from, to, length_m, modes, elevation_gain_m: 0.0, car_speed_mps });
            }
        }
        Self::new(nodes, edges)
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn node_id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn node_pos(&self, i: usize) -> LatLon {
        self.positions[i]
    }

    pub fn edges(&self) -> &[StreetEdge] {
        &self.edges
    }

    /// Neighbours of `node` as (neighbour, edge index).
    pub fn neighbours(&self, node: usize) -> &[(usize, usize)] {
        &self.adjacency[node]
    }

    /// Nearest node carrying at least one edge usable by `mode`.
    pub fn snap(&self, p: LatLon, mode: StreetMode) -> Option<(usize, f64)> {
        self.grid.nearest_by(p, MAX_SNAP_M, |i| self.node_modes[i].contains(mode))
    }

    pub fn edge_duration(&self, e: &StreetEdge, mode: StreetMode, speeds: &Speeds) -> f64 {
        let v = match mode {
            StreetMode::Walk => speeds.walk_mps,
            StreetMode::Cycle => speeds.cycle_mps,
            StreetMode::Car => e.car_speed_mps.unwrap_or(speeds.car_mps),
        };
        e.length_m / v
    }

    /// Shortest-duration path between two nodes.
    pub fn shortest_path(&self, from: usize, to: usize, mode: StreetMode, speeds: &Speeds) -> Option<RouteEstimate> {
        let n = self.ids.len();
        let mut best = vec![f64::INFINITY; n];
        let mut via: Vec<Option<(usize, usize)>> = vec![None; n];
        let mut heap = BinaryHeap::new();
        best[from] = 0.0;
        heap.push(Queued { cost: 0.0, node: from });
        while let Some(Queued { cost, node }) = heap.pop() {
            if cost > best[node] {
                continue;
            }
            if node == to {
                break;
            }
            for &(next, ei) in &self.adjacency[node] {
                let e = &self.edges[ei];
                if !e.modes.contains(mode) {
                    continue;
                }
                let c = cost + self.edge_duration(e, mode, speeds);
                if c < best[next] {
                    best[next] = c;
                    via[next] = Some((node, ei));
                    heap.push(Queued { cost: c, node: next });
                }
            }
        }
        if !best[to].is_finite() {
            return None;
        }
        let mut est = RouteEstimate { duration_s: best[to], ..Default::default() };
        let mut cur = to;
        while let Some((prev, ei)) = via[cur] {
            let e = &self.edges[ei];
            est.distance_m += e.length_m;
            if e.from == prev {
                est.elevation_gain_m += e.elevation_gain_m;
            }
            cur = prev;
        }
        Some(est)
    }

    /// Walking distances from `from` to every node within `max_m` of network distance.
    pub fn walk_distances(&self, from: usize, max_m: f64) -> Vec<(usize, f64)> {
        let mut best: HashMap<usize, f64> = HashMap::new();
        let mut heap = BinaryHeap::new();
        best.insert(from, 0.0);
        heap.push(Queued { cost: 0.0, node: from });
        let mut out = Vec::new();
        while let Some(Queued { cost, node }) = heap.pop() {
            if cost > best[&node] {
                continue;
            }
            out.push((node, cost));
            for &(next, ei) in &self.adjacency[node] {
                let e = &self.edges[ei];
                if !e.modes.contains(StreetMode::Walk) {
                    continue;
                }
                let c = cost + e.length_m;
                if c <= max_m && best.get(&next).is_none_or(|&b| c < b) {
                    best.insert(next, c);
                    heap.push(Queued { cost: c, node: next });
                }
            }
        }
        out
    }
}

/// Shortest-duration route between two points for one street mode.
pub fn route_unimodal(graph: &StreetGraph, o: LatLon, d: LatLon, mode: StreetMode, speeds: &Speeds) -> Result<RouteEstimate, RouterError> {
    if o == d {
        return Ok(RouteEstimate::default());
    }
    let (from, access_m) = graph.snap(o, mode).ok_or(RouterError::NoRoute)?;
    let (to, egress_m) = graph.snap(d, mode).ok_or(RouterError::NoRoute)?;
    let mut est = graph.shortest_path(from, to, mode, speeds).ok_or(RouterError::NoRoute)?;
    est.access_m = access_m;
    est.egress_m = egress_m;
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesy::destination;

    fn line_graph(length: f64) -> StreetGraph {
        let a = LatLon::new(52.0, 21.0);
        let b = destination(a, 90.0, length);
        StreetGraph::new(
            vec![("a".into(), a), ("b".into(), b)],
            vec![StreetEdge { from: 0, to: 1, length_m: length, modes: ModeSet::ALL, elevation_gain_m: 3.0, car_speed_mps: None }],
        )
        .unwrap()
    }

    #[test]
    fn identical_endpoints_give_zero() {
        let g = line_graph(1000.0);
        let p = g.node_pos(0);
        assert_eq!(route_unimodal(&g, p, p, StreetMode::Walk, &Speeds::default()).unwrap(), RouteEstimate::default());
    }

    #[test]
    fn single_walk_edge() {
        let g = line_graph(1000.0);
        let r = route_unimodal(&g, g.node_pos(0), g.node_pos(1), StreetMode::Walk, &Speeds::default()).unwrap();
        assert!((r.duration_s - 800.0).abs() < 1e-9);
        assert_eq!(r.distance_m, 1000.0);
        assert_eq!(r.elevation_gain_m, 3.0);
        let back = route_unimodal(&g, g.node_pos(1), g.node_pos(0), StreetMode::Walk, &Speeds::default()).unwrap();
        assert_eq!(back.elevation_gain_m, 0.0);
    }

    #[test]
    fn mode_permissions_respected() {
        let a = LatLon::new(52.0, 21.0);
        let b = destination(a, 90.0, 500.0);
        let g = StreetGraph::new(
            vec![("a".into(), a), ("b".into(), b)],
            vec![StreetEdge { from: 0, to: 1, length_m: 500.0, modes: ModeSet::of(&[StreetMode::Walk]), elevation_gain_m: 0.0, car_speed_mps: None }],
        )
        .unwrap();
        assert!(matches!(route_unimodal(&g, a, b, StreetMode::Car, &Speeds::default()), Err(RouterError::NoRoute)));
    }

    #[test]
    fn modes_parse_and_print() {
        assert_eq!(ModeSet::parse("walk|car").unwrap().to_label(), "walk|car");
        assert!(ModeSet::parse("boat").is_none());
    }

    #[test]
    fn non_positive_length_rejected() {
        let a = LatLon::new(52.0, 21.0);
        let err = StreetGraph::new(
            vec![("a".into(), a), ("b".into(), a)],
            vec![StreetEdge { from: 0, to: 1, length_m: 0.0, modes: ModeSet::ALL, elevation_gain_m: 0.0, car_speed_mps: None }],
        );
        assert!(err.is_err());
    }
}
