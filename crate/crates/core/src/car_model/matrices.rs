use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::zones::ZoneSet;
use super::CarModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    TtbcTraffic,
    TtbcFreeflow,
    TdCar,
    TdPt,
}

impl MatrixKind {
    pub const ALL: [MatrixKind; 4] = [MatrixKind::TtbcTraffic, MatrixKind::TtbcFreeflow, MatrixKind::TdCar, MatrixKind::TdPt];

    pub fn file_name(self) -> &'static str {
        match self {
            MatrixKind::TtbcTraffic => "ttbc_traffic.csv",
            MatrixKind::TtbcFreeflow => "ttbc_freeflow.csv",
            MatrixKind::TdCar => "td_car.csv",
            MatrixKind::TdPt => "td_pt.csv",
        }
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct RawRow {
    hour: u8,
    o_zone: String,
    d_zone: String,
    value: f64,
}

/// Hourly zone-to-zone matrices, dense over the zone set.
#[derive(Debug, Clone, Default)]
pub struct ZoneMatrices {
    n: usize,
    data: BTreeMap<(MatrixKind, u8), Vec<f64>>,
    /// Cells where the congested time is below the free-flow time.
    pub quality_warnings: usize,
}

impl ZoneMatrices {
    pub fn new(zones: &ZoneSet) -> Self {
        Self { n: zones.len(), data: BTreeMap::new(), quality_warnings: 0 }
    }

    /// Inserts one full hour; `values[o * n + d]` in zone-set order.
    pub fn insert(&mut self, kind: MatrixKind, hour: u8, values: Vec<f64>) -> Result<(), CarModelError> {
        if hour > 23 {
            return Err(CarModelError::Matrix(format!("hour {hour} out of range")));
        }
        if values.len() != self.n * self.n {
            return Err(CarModelError::Matrix(format!("{kind:?} hour {hour}: expected {} cells, got {}", self.n * self.n, values.len())));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(CarModelError::Matrix(format!("{kind:?} hour {hour}: invalid value {v}")));
        }
        self.data.insert((kind, hour), values);
        self.recount_warnings();
        Ok(())
    }

    fn recount_warnings(&mut self) {
        let mut warnings = 0;
        for ((kind, hour), tr) in &self.data {
            if *kind != MatrixKind::TtbcTraffic {
                continue;
            }
            if let Some(ntr) = self.data.get(&(MatrixKind::TtbcFreeflow, *hour)) {
                warnings += tr.iter().zip(ntr).filter(|(a, b)| a < b).count();
            }
        }
        self.quality_warnings = warnings;
    }

    /// Reads `<dir>/<kind>.csv` files in long format `hour,o_zone,d_zone,value`.
    /// Missing files leave that kind empty; every hour present must cover all zone pairs.
    pub fn load_dir(dir: impl AsRef<Path>, zones: &ZoneSet) -> Result<Self, CarModelError> {
        let mut m = Self::new(zones);
        for kind in MatrixKind::ALL {
            let path = dir.as_ref().join(kind.file_name());
            if !path.exists() {
                continue;
            }
            let mut hours: BTreeMap<u8, Vec<Option<f64>>> = BTreeMap::new();
            let mut rdr = csv::Reader::from_reader(File::open(&path)?);
            for (row, rec) in rdr.deserialize::<RawRow>().enumerate() {
                let rec = rec.map_err(|e| CarModelError::Matrix(format!("{}: row {}: {e}", path.display(), row + 2)))?;
                let o = zones.index_of(&rec.o_zone).ok_or_else(|| CarModelError::UnknownZone(rec.o_zone.clone()))?;
                let d = zones.index_of(&rec.d_zone).ok_or_else(|| CarModelError::UnknownZone(rec.d_zone.clone()))?;
                hours.entry(rec.hour).or_insert_with(|| vec![None; m.n * m.n])[o * m.n + d] = Some(rec.value);
            }
            for (hour, cells) in hours {
                let values: Option<Vec<f64>> = cells.into_iter().collect();
                let values = values.ok_or_else(|| CarModelError::Matrix(format!("{}: hour {hour} is not square over the zone set", path.display())))?;
                m.insert(kind, hour, values)?;
            }
        }
        Ok(m)
    }

    pub fn write_dir(&self, dir: impl AsRef<Path>, zones: &ZoneSet) -> Result<(), CarModelError> {
        std::fs::create_dir_all(dir.as_ref())?;
        let ids: Vec<&str> = zones.ids().collect();
        for kind in MatrixKind::ALL {
            let hours: Vec<_> = self.data.iter().filter(|((k, _), _)| *k == kind).collect();
            if hours.is_empty() {
                continue;
            }
            let mut w = csv::Writer::from_path(dir.as_ref().join(kind.file_name()))?;
            for ((_, hour), values) in hours {
                for (o, oid) in ids.iter().enumerate() {
                    for (d, did) in ids.iter().enumerate() {
                        w.serialize(RawRow { hour: *hour, o_zone: oid.to_string(), d_zone: did.to_string(), value: values[o * self.n + d] })?;
                    }
                }
            }
            w.flush()?;
        }
        Ok(())
    }

    pub fn has(&self, kind: MatrixKind, hour: u8) -> bool {
        self.data.contains_key(&(kind, hour))
    }

    pub fn hours(&self, kind: MatrixKind) -> Vec<u8> {
        self.data.keys().filter(|(k, _)| *k == kind).map(|(_, h)| *h).collect()
    }

    /// Value by zone indices.
    pub fn value(&self, kind: MatrixKind, hour: u8, o: usize, d: usize) -> Option<f64> {
        self.data.get(&(kind, hour)).map(|v| v[o * self.n + d])
    }

    pub(crate) fn column_sums(&self, kind: MatrixKind, hour: u8) -> Option<Vec<f64>> {
        let v = self.data.get(&(kind, hour))?;
        Some((0..self.n).map(|d| (0..self.n).map(|o| v[o * self.n + d]).sum()).collect())
    }
}
