//! Traffic zones, hourly zone matrices, car duration under congestion and
//! parking difficulty at the destination.

mod matrices;
mod zones;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use matrices::{MatrixKind, ZoneMatrices};
pub use zones::{zone_id_order, Zone, ZoneSet};

use crate::geodesy::LatLon;
use crate::geojson::GeoJsonError;

#[derive(Debug, Error)]
pub enum CarModelError {
    #[error("point {0:?} lies outside every zone")]
    OutOfArea(LatLon),
    #[error("unknown zone {0}")]
    UnknownZone(String),
    #[error("free-flow time is zero for {o} -> {d} at hour {hour}")]
    DegenerateRatioError { o: String, d: String, hour: u8 },
    #[error("{kind:?} matrix not available for hour {hour}")]
    MatrixUnavailable { kind: MatrixKind, hour: u8 },
    #[error("invalid zones: {0}")]
    InvalidZones(String),
    #[error("invalid matrix: {0}")]
    Matrix(String),
    #[error(transparent)]
    GeoJson(#[from] GeoJsonError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParkingMethod {
    OwnZone,
    Neighborhood,
    Rank,
}

impl ParkingMethod {
    pub const ALL: [ParkingMethod; 3] = [ParkingMethod::OwnZone, ParkingMethod::Neighborhood, ParkingMethod::Rank];
}

/// Free-flow car duration scaled by the congested to free-flow matrix ratio.
/// Hours without both matrices return the free-flow duration unchanged.
pub fn duration_in_traffic(free_flow_s: f64, o: &str, d: &str, hour: u8, zones: &ZoneSet, m: &ZoneMatrices) -> Result<f64, CarModelError> {
    let oi = zones.index_of(o).ok_or_else(|| CarModelError::UnknownZone(o.to_string()))?;
    let di = zones.index_of(d).ok_or_else(|| CarModelError::UnknownZone(d.to_string()))?;
    let (Some(tr), Some(ntr)) = (m.value(MatrixKind::TtbcTraffic, hour, oi, di), m.value(MatrixKind::TtbcFreeflow, hour, oi, di)) else {
        return Ok(free_flow_s);
    };
    if ntr == 0.0 {
        return Err(CarModelError::DegenerateRatioError { o: o.to_string(), d: d.to_string(), hour });
    }
    Ok(free_flow_s * (tr / ntr))
}

/// Parking difficulty at destination zone `d` from car arrivals in hour `hour`.
///
/// `OwnZone` sums arrivals into `d`; `Neighborhood` adds arrivals into the
/// zones sharing a boundary with `d`; `Rank` is the share of other zones with
/// strictly fewer arrivals than `d`, so the busiest zone scores 1.
pub fn parking_difficulty(d: &str, hour: u8, method: ParkingMethod, zones: &ZoneSet, m: &ZoneMatrices) -> Result<f64, CarModelError> {
    let di = zones.index_of(d).ok_or_else(|| CarModelError::UnknownZone(d.to_string()))?;
    let arrivals = m.column_sums(MatrixKind::TdCar, hour).ok_or(CarModelError::MatrixUnavailable { kind: MatrixKind::TdCar, hour })?;
    let own = arrivals[di];
    Ok(match method {
        ParkingMethod::OwnZone => own,
        ParkingMethod::Neighborhood => own + zones.neighbour_indices(di).iter().map(|&j| arrivals[j]).sum::<f64>(),
        ParkingMethod::Rank => {
            if arrivals.len() < 2 {
                0.0
            } else {
                arrivals.iter().filter(|&&a| a < own).count() as f64 / (arrivals.len() - 1) as f64
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_zones() -> ZoneSet {
        let sq = |x0: f64| vec![vec![LatLon::new(0.0, x0), LatLon::new(0.0, x0 + 1.0), LatLon::new(1.0, x0 + 1.0), LatLon::new(1.0, x0)]];
        ZoneSet::new(vec![("1".into(), sq(0.0)), ("2".into(), sq(1.0)), ("3".into(), sq(5.0))]).unwrap()
    }

    fn with_arrivals(zs: &ZoneSet, cols: [f64; 3]) -> ZoneMatrices {
        let mut m = ZoneMatrices::new(zs);
        let mut v = vec![0.0; 9];
        v[..3].copy_from_slice(&cols);
        m.insert(MatrixKind::TdCar, 8, v).unwrap();
        m
    }

    #[test]
    fn ranks_by_enumeration() {
        let zs = three_zones();
        let m = with_arrivals(&zs, [10.0, 20.0, 70.0]);
        let r: Vec<f64> = ["1", "2", "3"].iter().map(|z| parking_difficulty(z, 8, ParkingMethod::Rank, &zs, &m).unwrap()).collect();
        assert_eq!(r, vec![0.0, 0.5, 1.0]);
        assert_eq!(parking_difficulty("2", 8, ParkingMethod::OwnZone, &zs, &m).unwrap(), 20.0);
        assert_eq!(parking_difficulty("2", 8, ParkingMethod::Neighborhood, &zs, &m).unwrap(), 30.0);
        assert_eq!(parking_difficulty("3", 8, ParkingMethod::Neighborhood, &zs, &m).unwrap(), 70.0);
    }

    #[test]
    fn zero_arrivals() {
        let zs = three_zones();
        let m = with_arrivals(&zs, [0.0, 20.0, 70.0]);
        assert_eq!(parking_difficulty("1", 8, ParkingMethod::OwnZone, &zs, &m).unwrap(), 0.0);
        assert_eq!(parking_difficulty("1", 8, ParkingMethod::Rank, &zs, &m).unwrap(), 0.0);
        assert!(matches!(parking_difficulty("9", 8, ParkingMethod::Rank, &zs, &m), Err(CarModelError::UnknownZone(_))));
        assert!(matches!(parking_difficulty("1", 9, ParkingMethod::Rank, &zs, &m), Err(CarModelError::MatrixUnavailable { .. })));
    }

    #[test]
    fn traffic_ratio_and_passthrough() {
        let zs = three_zones();
        let mut m = ZoneMatrices::new(&zs);
        let mut tr = vec![900.0; 9];
        tr[1] = 1200.0;
        let mut ntr = vec![900.0; 9];
        ntr[1] = 800.0;
        m.insert(MatrixKind::TtbcTraffic, 8, tr).unwrap();
        m.insert(MatrixKind::TtbcFreeflow, 8, ntr.clone()).unwrap();
        assert_eq!(duration_in_traffic(600.0, "1", "2", 8, &zs, &m).unwrap(), 900.0);
        assert_eq!(duration_in_traffic(600.0, "1", "1", 8, &zs, &m).unwrap(), 600.0);
        assert_eq!(duration_in_traffic(600.0, "1", "2", 3, &zs, &m).unwrap(), 600.0);
        ntr[2] = 0.0;
        m.insert(MatrixKind::TtbcFreeflow, 8, ntr).unwrap();
        assert!(matches!(duration_in_traffic(600.0, "1", "3", 8, &zs, &m), Err(CarModelError::DegenerateRatioError { .. })));
    }

    #[test]
    fn matrices_round_trip_through_csv() {
        let zs = three_zones();
        let mut m = ZoneMatrices::new(&zs);
        m.insert(MatrixKind::TdPt, 7, (0..9).map(|i| i as f64 * 1.5).collect()).unwrap();
        m.insert(MatrixKind::TtbcTraffic, 7, vec![100.0; 9]).unwrap();
        m.insert(MatrixKind::TtbcFreeflow, 7, vec![120.0; 9]).unwrap();
        assert_eq!(m.quality_warnings, 9);
        let dir = tempfile::tempdir().unwrap();
        m.write_dir(dir.path(), &zs).unwrap();
        let back = ZoneMatrices::load_dir(dir.path(), &zs).unwrap();
        assert_eq!(back.value(MatrixKind::TdPt, 7, 2, 1), Some(10.5));
        assert_eq!(back.hours(MatrixKind::TdCar), Vec::<u8>::new());
        assert_eq!(back.quality_warnings, 9);
    }

    #[test]
    fn incomplete_hour_rejected() {
        let zs = three_zones();
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("td_car.csv"), "hour,o_zone,d_zone,value\n8,1,2,5\n").unwrap();
        assert!(matches!(ZoneMatrices::load_dir(dir.path(), &zs), Err(CarModelError::Matrix(_))));
    }
}
