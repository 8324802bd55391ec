use std::cmp::Ordering;
use std::collections::HashMap;
use std::path::Path;

use super::CarModelError;
use crate::geodesy::LatLon;
use crate::geojson::{read_features, Geometry, Ring};
use crate::spatial::{polygon_position, RingPosition, Xy};

/// Numeric ids compare numerically, anything else lexicographically after them.
pub fn zone_id_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Zone {
    pub id: String,
    /// Exterior ring then holes, as (lon, lat).
    pub rings: Vec<Vec<Xy>>,
    bbox: (f64, f64, f64, f64),
}

/// Zones sorted by id with precomputed boundary adjacency.
#[derive(Debug, Clone)]
pub struct ZoneSet {
    zones: Vec<Zone>,
    index: HashMap<String, usize>,
    adjacency: Vec<Vec<usize>>,
}

fn to_xy(ring: &Ring) -> Vec<Xy> {
    ring.iter().map(|p| (p.lon, p.lat)).collect()
}

fn segments_cross(a: Xy, b: Xy, c: Xy, d: Xy) -> bool {
    let orient = |p: Xy, q: Xy, r: Xy| (q.0 - p.0) * (r.1 - p.1) - (q.1 - p.1) * (r.0 - p.0);
    let (d1, d2) = (orient(c, d, a), orient(c, d, b));
    let (d3, d4) = (orient(a, b, c), orient(a, b, d));
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

fn is_simple(ring: &[Xy]) -> bool {
    let n = ring.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_cross(ring[i], ring[(i + 1) % n], ring[j], ring[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

/// Length of the collinear overlap of two segments, 0 when they are not collinear.
fn shared_length(a: Xy, b: Xy, c: Xy, d: Xy) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len = dx.hypot(dy);
    if len == 0.0 {
        return 0.0;
    }
    let tol = 1e-9 * len;
    let dist = |p: Xy| ((p.0 - a.0) * dy - (p.1 - a.1) * dx).abs() / len;
    if dist(c) > tol || dist(d) > tol {
        return 0.0;
    }
    let t = |p: Xy| ((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len;
    let (tc, td) = (t(c), t(d));
    let lo = tc.min(td).max(0.0);
    let hi = tc.max(td).min(len);
    (hi - lo).max(0.0)
}

fn bboxes_touch(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64)) -> bool {
    a.0 <= b.2 && b.0 <= a.2 && a.1 <= b.3 && b.1 <= a.3
}

impl ZoneSet {
    pub fn new(zones: Vec<(String, Vec<Ring>)>) -> Result<Self, CarModelError> {
        let mut out: Vec<Zone> = Vec::with_capacity(zones.len());
        for (id, rings) in zones {
            if rings.is_empty() {
                return Err(CarModelError::InvalidZones(format!("zone {id} has no ring")));
            }
            let rings: Vec<Vec<Xy>> = rings.iter().map(to_xy).collect();
            if let Some(bad) = rings.iter().find(|r| !is_simple(r)) {
                return Err(CarModelError::InvalidZones(format!("zone {id} has a self-intersecting ring of {} vertices", bad.len())));
            }
            let outer = &rings[0];
            let bbox = outer.iter().fold((f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY), |b, p| {
                (b.0.min(p.0), b.1.min(p.1), b.2.max(p.0), b.3.max(p.1))
            });
            out.push(Zone { id, rings, bbox });
        }
        out.sort_by(|a, b| zone_id_order(&a.id, &b.id));
        let mut index = HashMap::new();
        for (i, z) in out.iter().enumerate() {
            if index.insert(z.id.clone(), i).is_some() {
                return Err(CarModelError::InvalidZones(format!("duplicate zone id {}", z.id)));
            }
        }
        let mut adjacency = vec![Vec::new(); out.len()];
        for i in 0..out.len() {
            for j in i + 1..out.len() {
                if !bboxes_touch(out[i].bbox, out[j].bbox) {
                    continue;
                }
                let (ri, rj) = (&out[i].rings[0], &out[j].rings[0]);
                let shared: f64 = (0..ri.len())
                    .map(|a| {
                        (0..rj.len())
                            .map(|c| shared_length(ri[a], ri[(a + 1) % ri.len()], rj[c], rj[(c + 1) % rj.len()]))
                            .sum::<f64>()
                    })
                    .sum();
                if shared > 0.0 {
                    adjacency[i].push(j);
                    adjacency[j].push(i);
                }
            }
        }
        Ok(Self { zones: out, index, adjacency })
    }

    /// Polygon features carrying an `id` property.
    pub fn from_geojson(path: impl AsRef<Path>) -> Result<Self, CarModelError> {
        let mut zones = Vec::new();
        for f in read_features(path)? {
            let Geometry::Polygon(rings) = f.geometry.clone() else {
                return Err(CarModelError::InvalidZones("zone layer contains a non-polygon feature".into()));
            };
            let id = f.prop_str("id").ok_or_else(|| CarModelError::InvalidZones("zone feature without id".into()))?;
            zones.push((id, rings));
        }
        Self::new(zones)
    }

    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.zones.iter().map(|z| z.id.as_str())
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Containing zone; a point on a shared boundary goes to the lowest id.
    pub fn zone_of(&self, p: LatLon) -> Result<&str, CarModelError> {
        let xy = (p.lon, p.lat);
        self.zones
            .iter()
            .find(|z| {
                let b = z.bbox;
                xy.0 >= b.0 && xy.0 <= b.2 && xy.1 >= b.1 && xy.1 <= b.3 && polygon_position(xy, &z.rings) != RingPosition::Outside
            })
            .map(|z| z.id.as_str())
            .ok_or(CarModelError::OutOfArea(p))
    }

    /// Zones sharing a boundary of positive length with `id`.
    pub fn neighbours(&self, id: &str) -> Result<Vec<&str>, CarModelError> {
        let i = self.index_of(id).ok_or_else(|| CarModelError::UnknownZone(id.to_string()))?;
        Ok(self.adjacency[i].iter().map(|&j| self.zones[j].id.as_str()).collect())
    }

    pub(crate) fn neighbour_indices(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub fn square(x0: f64, y0: f64, size: f64) -> Vec<Ring> {
        vec![vec![
            LatLon::new(y0, x0),
            LatLon::new(y0, x0 + size),
            LatLon::new(y0 + size, x0 + size),
            LatLon::new(y0 + size, x0),
        ]]
    }

    #[test]
    fn interior_and_shared_edge() {
        let zs = ZoneSet::new(vec![("7".into(), square(21.01, 52.0, 0.01)), ("3".into(), square(21.0, 52.0, 0.01))]).unwrap();
        assert_eq!(zs.zone_of(LatLon::new(52.005, 21.005)).unwrap(), "3");
        assert_eq!(zs.zone_of(LatLon::new(52.005, 21.015)).unwrap(), "7");
        assert_eq!(zs.zone_of(LatLon::new(52.005, 21.01)).unwrap(), "3");
        assert!(matches!(zs.zone_of(LatLon::new(53.0, 21.0)), Err(CarModelError::OutOfArea(_))));
    }

    #[test]
    fn adjacency_requires_shared_length() {
        let zs = ZoneSet::new(vec![
            ("1".into(), square(0.0, 0.0, 1.0)),
            ("2".into(), square(1.0, 0.0, 1.0)),
            ("3".into(), square(1.0, 1.0, 1.0)),
            ("4".into(), square(5.0, 5.0, 1.0)),
        ])
        .unwrap();
        assert_eq!(zs.neighbours("1").unwrap(), vec!["2"]);
        assert_eq!(zs.neighbours("2").unwrap(), vec!["1", "3"]);
        assert!(zs.neighbours("4").unwrap().is_empty());
    }

    #[test]
    fn rejects_bow_tie_and_duplicates() {
        let bow = vec![vec![LatLon::new(0.0, 0.0), LatLon::new(1.0, 1.0), LatLon::new(0.0, 1.0), LatLon::new(1.0, 0.0)]];
        assert!(ZoneSet::new(vec![("1".into(), bow)]).is_err());
        assert!(ZoneSet::new(vec![("1".into(), square(0.0, 0.0, 1.0)), ("1".into(), square(2.0, 0.0, 1.0))]).is_err());
    }

    #[test]
    fn id_order_is_numeric() {
        assert_eq!(zone_id_order("10", "9"), Ordering::Greater);
        assert_eq!(zone_id_order("a", "9"), Ordering::Greater);
    }
}
