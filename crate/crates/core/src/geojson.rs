//! Minimal GeoJSON reading and writing (FeatureCollection of points, lines, polygons).

use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::geodesy::LatLon;

#[derive(Debug, Error)]
pub enum GeoJsonError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid geojson: {0}")]
    Invalid(String),
}

/// Closed rings are stored without the repeated closing vertex.
pub type Ring = Vec<LatLon>;

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Point(LatLon),
    LineString(Vec<LatLon>),
    /// Exterior ring followed by holes.
    Polygon(Vec<Ring>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub geometry: Geometry,
    pub properties: Map<String, Value>,
}

impl Feature {
    pub fn new(geometry: Geometry) -> Self {
        Self { geometry, properties: Map::new() }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.properties.insert(key.to_string(), value.into());
        self
    }

    pub fn prop_str(&self, key: &str) -> Option<String> {
        match self.properties.get(key)? {
            Value::String(s) => Some(s.clone()),
            Value::Number(n) => Some(n.to_string()),
            _ => None,
        }
    }

    pub fn prop_f64(&self, key: &str) -> Option<f64> {
        match self.properties.get(key)? {
            Value::Number(n) => n.as_f64(),
            Value::String(s) => s.parse().ok(),
            _ => None,
        }
    }
}

fn position(v: &Value) -> Result<LatLon, GeoJsonError> {
    let arr = v.as_array().ok_or_else(|| GeoJsonError::Invalid("position must be an array".into()))?;
    let lon = arr.first().and_then(Value::as_f64);
    let lat = arr.get(1).and_then(Value::as_f64);
    match (lat, lon) {
        (Some(lat), Some(lon)) => Ok(LatLon::new(lat, lon)),
        _ => Err(GeoJsonError::Invalid("position needs numeric lon, lat".into())),
    }
}

fn positions(v: &Value) -> Result<Vec<LatLon>, GeoJsonError> {
    v.as_array()
        .ok_or_else(|| GeoJsonError::Invalid("expected coordinate array".into()))?
        .iter()
        .map(position)
        .collect()
}

fn ring(v: &Value) -> Result<Ring, GeoJsonError> {
    let mut pts = positions(v)?;
    if pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    if pts.len() < 3 {
        return Err(GeoJsonError::Invalid("polygon ring needs at least 3 distinct vertices".into()));
    }
    Ok(pts)
}

fn geometries(v: &Value) -> Result<Vec<Geometry>, GeoJsonError> {
    let kind = v.get("type").and_then(Value::as_str).unwrap_or("");
    let coords = v.get("coordinates").unwrap_or(&Value::Null);
    let arr = || coords.as_array().cloned().unwrap_or_default();
    Ok(match kind {
        "Point" => vec![Geometry::Point(position(coords)?)],
        "MultiPoint" => positions(coords)?.into_iter().map(Geometry::Point).collect(),
        "LineString" => vec![Geometry::LineString(positions(coords)?)],
        "MultiLineString" => arr().iter().map(|l| positions(l).map(Geometry::LineString)).collect::<Result<_, _>>()?,
        "Polygon" => vec![Geometry::Polygon(arr().iter().map(ring).collect::<Result<_, _>>()?)],
        "MultiPolygon" => arr()
            .iter()
            .map(|p| {
                p.as_array()
                    .ok_or_else(|| GeoJsonError::Invalid("bad multipolygon".into()))?
                    .iter()
                    .map(ring)
                    .collect::<Result<Vec<_>, _>>()
                    .map(Geometry::Polygon)
            })
            .collect::<Result<_, _>>()?,
        other => return Err(GeoJsonError::Invalid(format!("unsupported geometry type {other:?}"))),
    })
}

/// Parses a FeatureCollection. Multi-geometries are split into one feature per part.
pub fn parse_features(text: &str) -> Result<Vec<Feature>, GeoJsonError> {
    let root: Value = serde_json::from_str(text).map_err(|source| GeoJsonError::Json { path: PathBuf::new(), source })?;
    let features = root
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| GeoJsonError::Invalid("expected a FeatureCollection".into()))?;
    let mut out = Vec::with_capacity(features.len());
    for f in features {
        let properties = f.get("properties").and_then(Value::as_object).cloned().unwrap_or_default();
        let Some(geom) = f.get("geometry").filter(|g| !g.is_null()) else { continue };
        for geometry in geometries(geom)? {
            out.push(Feature { geometry, properties: properties.clone() });
        }
    }
    Ok(out)
}

pub fn read_features(path: impl AsRef<Path>) -> Result<Vec<Feature>, GeoJsonError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| GeoJsonError::Io { path: path.to_path_buf(), source })?;
    parse_features(&text).map_err(|e| match e {
        GeoJsonError::Json { source, .. } => GeoJsonError::Json { path: path.to_path_buf(), source },
        other => other,
    })
}

fn pos_json(p: &LatLon) -> Value {
    json!([p.lon, p.lat])
}

fn geometry_json(g: &Geometry) -> Value {
    match g {
        Geometry::Point(p) => json!({"type": "Point", "coordinates": pos_json(p)}),
        Geometry::LineString(ps) => json!({"type": "LineString", "coordinates": ps.iter().map(pos_json).collect::<Vec<_>>()}),
        Geometry::Polygon(rings) => {
            let rings: Vec<Value> = rings
                .iter()
                .map(|r| {
                    let mut pts: Vec<Value> = r.iter().map(pos_json).collect();
                    if let Some(first) = r.first() {
                        pts.push(pos_json(first));
                    }
                    Value::Array(pts)
                })
                .collect();
            json!({"type": "Polygon", "coordinates": rings})
        }
    }
}

pub fn to_string(features: &[Feature]) -> String {
    let fs: Vec<Value> = features
        .iter()
        .map(|f| json!({"type": "Feature", "properties": Value::Object(f.properties.clone()), "geometry": geometry_json(&f.geometry)}))
        .collect();
    serde_json::to_string_pretty(&json!({"type": "FeatureCollection", "features": fs})).expect("geojson serialises")
}

pub fn write_features(path: impl AsRef<Path>, features: &[Feature]) -> Result<(), GeoJsonError> {
    let path = path.as_ref();
    std::fs::write(path, to_string(features)).map_err(|source| GeoJsonError::Io { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_mixed_collection() {
        let fs = vec![
            Feature::new(Geometry::Point(LatLon::new(52.1, 21.2))).with("kind", "metro"),
            Feature::new(Geometry::LineString(vec![LatLon::new(52.0, 21.0), LatLon::new(52.1, 21.0)])),
            Feature::new(Geometry::Polygon(vec![vec![LatLon::new(0.0, 0.0), LatLon::new(0.0, 1.0), LatLon::new(1.0, 1.0)]]))
                .with("id", 3),
        ];
        let back = parse_features(&to_string(&fs)).unwrap();
        assert_eq!(back, fs);
        assert_eq!(back[2].prop_str("id").as_deref(), Some("3"));
    }

    #[test]
    fn multipolygon_splits() {
        let text = r#"{"type":"FeatureCollection","features":[{"type":"Feature","properties":{},
          "geometry":{"type":"MultiPolygon","coordinates":[[[[0,0],[1,0],[1,1],[0,0]]],[[[2,2],[3,2],[3,3],[2,2]]]]}}]}"#;
        assert_eq!(parse_features(text).unwrap().len(), 2);
    }
}
