//! Densities of roads, addresses and population, green-area share and
//! distances to the nearest stop of each kind around a point.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesy::{haversine_m, LatLon, LocalProjection};
use crate::geojson::{read_features, GeoJsonError, Geometry, Ring};
use crate::gtfs::VehicleKind;
use crate::spatial::{circle_polygon, clip_convex, segment_length_in_disc, signed_area, PointGrid};

pub const DEFAULT_RADIUS_M: f64 = 500.0;
/// Stops farther than this count as absent.
pub const MAX_STOP_DISTANCE_M: f64 = 20_000.0;
const CELL_DEG: f64 = 0.005;
const CIRCLE_VERTICES: usize = 256;

#[derive(Debug, Error)]
pub enum BuiltEnvError {
    #[error("{layer}: {reason}")]
    Layer { layer: String, reason: String },
    #[error("radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error(transparent)]
    GeoJson(#[from] GeoJsonError),
}

#[derive(Debug, Clone)]
struct GreenArea {
    rings: Vec<Ring>,
    bbox: (LatLon, LatLon),
}

/// Spatial layers with their indices.
#[derive(Debug, Clone)]
pub struct SpatialDb {
    road_segments: Vec<(LatLon, LatLon)>,
    road_index: PointGrid,
    max_half_segment_m: f64,
    addresses: PointGrid,
    population: PointGrid,
    population_weights: Vec<f64>,
    green: Vec<GreenArea>,
    stops: Vec<(VehicleKind, PointGrid)>,
}

pub const LAYER_FILES: [&str; 5] = ["roads.geojson", "addresses.geojson", "population.geojson", "green.geojson", "stops.geojson"];

impl SpatialDb {
    pub fn new(
        roads: Vec<Vec<LatLon>>,
        addresses: Vec<LatLon>,
        population: Vec<(LatLon, f64)>,
        green: Vec<Vec<Ring>>,
        stops: Vec<(LatLon, VehicleKind)>,
    ) -> Self {
        let road_segments: Vec<(LatLon, LatLon)> = roads.iter().flat_map(|l| l.windows(2).map(|w| (w[0], w[1]))).collect();
        let mids: Vec<LatLon> = road_segments.iter().map(|(a, b)| LatLon::new((a.lat + b.lat) / 2.0, (a.lon + b.lon) / 2.0)).collect();
        let max_half_segment_m = road_segments.iter().map(|(a, b)| haversine_m(*a, *b) / 2.0).fold(0.0, f64::max);
        let green = green
            .into_iter()
            .filter(|r| !r.is_empty() && !r[0].is_empty())
            .map(|rings| {
                let (mut lo, mut hi) = (LatLon::new(90.0, 180.0), LatLon::new(-90.0, -180.0));
                for p in &rings[0] {
                    lo = LatLon::new(lo.lat.min(p.lat), lo.lon.min(p.lon));
                    hi = LatLon::new(hi.lat.max(p.lat), hi.lon.max(p.lon));
                }
                GreenArea { rings, bbox: (lo, hi) }
            })
            .collect();
        let stops = VehicleKind::ALL
            .into_iter()
            .map(|k| (k, PointGrid::new(stops.iter().filter(|s| s.1 == k).map(|s| s.0).collect(), CELL_DEG)))
            .collect();
        Self {
            road_segments,
            road_index: PointGrid::new(mids, CELL_DEG),
            max_half_segment_m,
            addresses: PointGrid::new(addresses, CELL_DEG),
            population: PointGrid::new(population.iter().map(|p| p.0).collect(), CELL_DEG),
            population_weights: population.iter().map(|p| p.1).collect(),
            green,
            stops,
        }
    }

    /// Loads the five layer files from `dir`; a missing file is an empty layer.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, BuiltEnvError> {
        let read = |name: &str| -> Result<Vec<crate::geojson::Feature>, BuiltEnvError> {
            let p = dir.as_ref().join(name);
            if p.exists() {
                Ok(read_features(p)?)
            } else {
                Ok(Vec::new())
            }
        };
        let bad = |layer: &str, reason: &str| BuiltEnvError::Layer { layer: layer.into(), reason: reason.into() };
        let mut roads = Vec::new();
        for f in read("roads.geojson")? {
            match f.geometry {
                Geometry::LineString(l) => roads.push(l),
                _ => return Err(bad("roads", "expected line strings")),
            }
        }
        let mut addresses = Vec::new();
        for f in read("addresses.geojson")? {
            match f.geometry {
                Geometry::Point(p) => addresses.push(p),
                _ => return Err(bad("addresses", "expected points")),
            }
        }
        let mut population = Vec::new();
        for f in read("population.geojson")? {
            let w = f.prop_f64("population").ok_or_else(|| bad("population", "point without population"))?;
            match f.geometry {
                Geometry::Point(p) => population.push((p, w)),
                _ => return Err(bad("population", "expected points")),
            }
        }
        let mut green = Vec::new();
        for f in read("green.geojson")? {
            match f.geometry {
                Geometry::Polygon(r) => green.push(r),
                _ => return Err(bad("green", "expected polygons")),
            }
        }
        let mut stops = Vec::new();
        for f in read("stops.geojson")? {
            let kind = f.prop_str("kind").and_then(|k| VehicleKind::parse(&k)).ok_or_else(|| bad("stops", "stop without a known kind"))?;
            match f.geometry {
                Geometry::Point(p) => stops.push((p, kind)),
                _ => return Err(bad("stops", "expected points")),
            }
        }
        let all_valid = roads.iter().flatten().chain(addresses.iter()).chain(population.iter().map(|p| &p.0)).all(LatLon::is_valid);
        if !all_valid {
            return Err(bad("layers", "coordinate outside WGS84 range"));
        }
        Ok(Self::new(roads, addresses, population, green, stops))
    }

    fn green_area_in_disc(&self, center: LatLon, radius_m: f64) -> (f64, f64) {
        let proj = LocalProjection::new(center);
        let disc = circle_polygon((0.0, 0.0), radius_m, CIRCLE_VERTICES);
        let disc_area = signed_area(&disc);
        let (dlat, dlon) = crate::geodesy::bbox_deltas(center, radius_m);
        let mut area = 0.0;
        for g in &self.green {
            if g.bbox.1.lat < center.lat - dlat || g.bbox.0.lat > center.lat + dlat || g.bbox.1.lon < center.lon - dlon || g.bbox.0.lon > center.lon + dlon {
                continue;
            }
            for (i, ring) in g.rings.iter().enumerate() {
                let xy: Vec<_> = ring.iter().map(|p| proj.project(*p)).collect();
                let a = signed_area(&clip_convex(&xy, &disc)).abs();
                area += if i == 0 { a } else { -a };
            }
        }
        (area.max(0.0), disc_area)
    }
}

fn kind_label(k: VehicleKind) -> &'static str {
    match k {
        VehicleKind::Bus => "Bus",
        VehicleKind::Tram => "Tram",
        VehicleKind::Metro => "Metro",
        VehicleKind::Rail => "Rail",
    }
}

/// Feature names in emission order, with an optional prefix such as `home`.
pub fn built_env_names(prefix: &str) -> Vec<String> {
    let cap = |s: &str| {
        if prefix.is_empty() {
            s.to_string()
        } else {
            format!("{prefix}{s}")
        }
    };
    let mut names: Vec<String> =
        ["RoadDensity_URBAN", "AddressDensity_URBAN", "PopulationDensity_URBAN", "GreenShare_URBAN"].iter().map(|s| cap(s)).collect();
    for k in VehicleKind::ALL {
        names.push(cap(&format!("{}Distance_URBAN", kind_label(k))));
    }
    names
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuiltEnvFeatures {
    pub road_density: f64,
    pub address_density: f64,
    pub population_density: f64,
    pub green_share: f64,
    /// Metres to the nearest stop per kind in [`VehicleKind::ALL`] order, -1 when none.
    pub stop_distance_m: [f64; 4],
}

impl BuiltEnvFeatures {
    pub fn named(&self, prefix: &str) -> Vec<(String, f64)> {
        let values = [self.road_density, self.address_density, self.population_density, self.green_share]
            .into_iter()
            .chain(self.stop_distance_m);
        built_env_names(prefix).into_iter().zip(values).collect()
    }

    pub fn distance_to(&self, k: VehicleKind) -> f64 {
        self.stop_distance_m[VehicleKind::ALL.iter().position(|x| *x == k).unwrap()]
    }
}

/// Features within a disc of `radius_m` around `p`. Densities are per km².
pub fn compute_built_env(db: &SpatialDb, p: LatLon, radius_m: f64) -> Result<BuiltEnvFeatures, BuiltEnvError> {
    if !(radius_m > 0.0) {
        return Err(BuiltEnvError::InvalidRadius(radius_m));
    }
    let area_km2 = std::f64::consts::PI * radius_m * radius_m / 1e6;
    let proj = LocalProjection::new(p);
    let road_m: f64 = db
        .road_index
        .within(p, radius_m + db.max_half_segment_m)
        .into_iter()
        .map(|i| {
            let (a, b) = db.road_segments[i];
            segment_length_in_disc(proj.project(a), proj.project(b), radius_m)
        })
        .sum();
    let addresses = db.addresses.within(p, radius_m).len() as f64;
    let population: f64 = db.population.within(p, radius_m).into_iter().map(|i| db.population_weights[i]).sum();
    let (green, disc) = db.green_area_in_disc(p, radius_m);
    let mut stop_distance_m = [-1.0; 4];
    for (i, (_, grid)) in db.stops.iter().enumerate() {
        if let Some((_, d)) = grid.nearest_by(p, MAX_STOP_DISTANCE_M, |_| true) {
            stop_distance_m[i] = d;
        }
    }
    Ok(BuiltEnvFeatures {
        road_density: road_m / area_km2,
        address_density: addresses / area_km2,
        population_density: population / area_km2,
        green_share: (green / disc).clamp(0.0, 1.0),
        stop_distance_m,
    })
}
