//! WGS84 helpers: great-circle distance and a local metric projection.

use serde::{Deserialize, Serialize};

/// Mean Earth radius in metres.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub const fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
    }

    pub fn distance_m(&self, other: &LatLon) -> f64 {
        haversine_m(*self, *other)
    }
}

pub fn haversine_m(a: LatLon, b: LatLon) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Point `distance_m` metres away from `origin` along a bearing (degrees clockwise from north).
pub fn destination(origin: LatLon, bearing_deg: f64, distance_m: f64) -> LatLon {
    let delta = distance_m / EARTH_RADIUS_M;
    let theta = bearing_deg.to_radians();
    let phi1 = origin.lat.to_radians();
    let lambda1 = origin.lon.to_radians();
    let phi2 = (phi1.sin() * delta.cos() + phi1.cos() * delta.sin() * theta.cos()).asin();
    let lambda2 = lambda1
        + (theta.sin() * delta.sin() * phi1.cos()).atan2(delta.cos() - phi1.sin() * phi2.sin());
    LatLon::new(phi2.to_degrees(), lambda2.to_degrees())
}

/// Equirectangular projection centred on a reference point, in metres.
///
/// Accurate to well under a percent within a few kilometres of the centre,
/// which is the scale every area computation in this crate works at.
#[derive(Debug, Clone, Copy)]
pub struct LocalProjection {
    center: LatLon,
    cos_lat: f64,
}

impl LocalProjection {
    pub fn new(center: LatLon) -> Self {
        Self {
            center,
            cos_lat: center.lat.to_radians().cos(),
        }
    }

    pub fn project(&self, p: LatLon) -> (f64, f64) {
        let x = (p.lon - self.center.lon).to_radians() * EARTH_RADIUS_M * self.cos_lat;
        let y = (p.lat - self.center.lat).to_radians() * EARTH_RADIUS_M;
        (x, y)
    }

    pub fn unproject(&self, x: f64, y: f64) -> LatLon {
        let lat = self.center.lat + (y / EARTH_RADIUS_M).to_degrees();
        let lon = self.center.lon + (x / (EARTH_RADIUS_M * self.cos_lat)).to_degrees();
        LatLon::new(lat, lon)
    }
}

/// Degree offsets that bound a disc of `radius_m` around `center`.
pub fn bbox_deltas(center: LatLon, radius_m: f64) -> (f64, f64) {
    let dlat = (radius_m / EARTH_RADIUS_M).to_degrees();
    let cos = center.lat.to_radians().cos().max(1e-6);
    let dlon = (radius_m / (EARTH_RADIUS_M * cos)).to_degrees();
    // small margin for the curvature the flat bound ignores
    (dlat * 1.01, dlon * 1.01)
}
