use std::path::Path;

use serde::{Deserialize, Serialize};

use super::VehicleFlowError;
use crate::clock::Epoch;
use crate::geodesy::LatLon;

/// One GPS fix of a vehicle identified by line and brigade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleLocation {
    pub epoch: Epoch,
    pub line: String,
    pub brigade: String,
    pub pos: LatLon,
}

impl VehicleLocation {
    pub fn vehicle_id(&self) -> String {
        format!("{}/{}", self.line, self.brigade)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceReadReport {
    pub rows: usize,
    pub corrupt: usize,
}

/// Reads `epoch,line,brigade,lat,lon`. Corrupt rows are counted and skipped.
pub fn read_traces(path: impl AsRef<Path>) -> Result<(Vec<VehicleLocation>, TraceReadReport), VehicleFlowError> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|source| VehicleFlowError::Csv { path: path.to_path_buf(), source })?;
    let headers = rdr.headers().map_err(|source| VehicleFlowError::Csv { path: path.to_path_buf(), source })?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim_start_matches('\u{feff}') == name);
    let cols = [col("epoch"), col("line"), col("brigade"), col("lat"), col("lon")];
    let mut report = TraceReadReport::default();
    let mut out = Vec::new();
    for rec in rdr.records() {
        report.rows += 1;
        let Ok(rec) = rec else {
            report.corrupt += 1;
            continue;
        };
        let field = |i: usize| cols[i].and_then(|c| rec.get(c));
        let parsed = (|| {
            let epoch = field(0)?.parse::<Epoch>().ok()?;
            let line = field(1).filter(|s| !s.is_empty())?.to_string();
            let brigade = field(2).filter(|s| !s.is_empty())?.to_string();
            let pos = LatLon::new(field(3)?.parse().ok()?, field(4)?.parse().ok()?);
            pos.is_valid().then_some(VehicleLocation { epoch, line, brigade, pos })
        })();
        match parsed {
            Some(loc) => out.push(loc),
            None => report.corrupt += 1,
        }
    }
    Ok((out, report))
}

pub fn write_traces(path: impl AsRef<Path>, records: &[VehicleLocation]) -> Result<(), VehicleFlowError> {
    let path = path.as_ref();
    let wrap = |source| VehicleFlowError::Csv { path: path.to_path_buf(), source };
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path).map_err(wrap)?;
    w.write_record(["epoch", "line", "brigade", "lat", "lon"]).map_err(wrap)?;
    for r in records {
        w.write_record([r.epoch.to_string(), r.line.clone(), r.brigade.clone(), format!("{:.7}", r.pos.lat), format!("{:.7}", r.pos.lon)])
            .map_err(wrap)?;
    }
    w.flush().map_err(|source| VehicleFlowError::Io { path: path.to_path_buf(), source })
}

/// Sorts by (line, brigade, epoch) and keeps the first record of every
/// (vehicle, epoch) pair. Returns the records and the number removed.
pub fn dedupe(mut records: Vec<VehicleLocation>) -> (Vec<VehicleLocation>, usize) {
    records.sort_by(|a, b| (&a.line, &a.brigade, a.epoch).cmp(&(&b.line, &b.brigade, b.epoch)));
    let before = records.len();
    records.dedup_by(|b, a| a.line == b.line && a.brigade == b.brigade && a.epoch == b.epoch);
    let removed = before - records.len();
    (records, removed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loc(epoch: Epoch, brigade: &str) -> VehicleLocation {
        VehicleLocation { epoch, line: "10".into(), brigade: brigade.into(), pos: LatLon::new(52.0, 21.0) }
    }

    #[test]
    fn dedupe_collapses_identical_vehicle_epoch() {
        let (out, removed) = dedupe(vec![loc(5, "1"), loc(0, "1"), loc(5, "1"), loc(5, "2")]);
        assert_eq!(removed, 1);
        assert_eq!(out.iter().map(|r| (r.epoch, r.brigade.as_str())).collect::<Vec<_>>(), [(0, "1"), (5, "1"), (5, "2")]);
    }

    #[test]
    fn corrupt_rows_are_counted() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        std::fs::write(&p, "epoch,line,brigade,lat,lon\n10,5,1,52.0,21.0\nxx,5,1,52,21\n11,5,1,95,21\n12,5,1\n").unwrap();
        let (recs, report) = read_traces(&p).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(report, TraceReadReport { rows: 4, corrupt: 3 });
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_traces(&p, &[loc(3, "7")]).unwrap();
        let (recs, _) = read_traces(&p).unwrap();
        assert_eq!(recs, vec![loc(3, "7")]);
    }
}
