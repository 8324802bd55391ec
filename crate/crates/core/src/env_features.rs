//! Weather and air-quality averages before a trip from the nearest station
//! that has data in the window.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Epoch;
use crate::geodesy::{haversine_m, LatLon};

pub const DEFAULT_WINDOWS_S: [i64; 2] = [7200, 86_400];
pub const ENV_SENTINEL: f64 = -9999.0;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("unknown parameter {0}")]
    UnknownParameter(String),
    #[error("station {station}, {parameter}: samples not strictly increasing at {epoch}")]
    NonIncreasing { station: String, parameter: String, epoch: Epoch },
    #[error("station {station}, {parameter}: negative concentration {value}")]
    NegativeConcentration { station: String, parameter: String, value: f64 },
    #[error("station {0} reported at two locations")]
    StationMoved(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EnvParameter {
    Temperature,
    Rainfall6h,
    Wind,
    Cloudiness,
    C6H6,
    O3,
    CO,
    NO2,
    PM25,
    PM10,
}

impl EnvParameter {
    pub const ALL: [EnvParameter; 10] = [
        EnvParameter::Temperature,
        EnvParameter::Rainfall6h,
        EnvParameter::Wind,
        EnvParameter::Cloudiness,
        EnvParameter::C6H6,
        EnvParameter::O3,
        EnvParameter::CO,
        EnvParameter::NO2,
        EnvParameter::PM25,
        EnvParameter::PM10,
    ];

    pub fn code(self) -> &'static str {
        match self {
            EnvParameter::Temperature => "temperature",
            EnvParameter::Rainfall6h => "rainfall_6h",
            EnvParameter::Wind => "wind",
            EnvParameter::Cloudiness => "cloudiness",
            EnvParameter::C6H6 => "c6h6",
            EnvParameter::O3 => "o3",
            EnvParameter::CO => "co",
            EnvParameter::NO2 => "no2",
            EnvParameter::PM25 => "pm2_5",
            EnvParameter::PM10 => "pm10",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.code().eq_ignore_ascii_case(s.trim()))
    }

    /// Name fragment used in feature names.
    pub fn label(self) -> &'static str {
        match self {
            EnvParameter::Temperature => "Temperature",
            EnvParameter::Rainfall6h => "Rainfall6h",
            EnvParameter::Wind => "WindSpeed",
            EnvParameter::Cloudiness => "Cloudiness",
            EnvParameter::C6H6 => "C6H6",
            EnvParameter::O3 => "O3",
            EnvParameter::CO => "CO",
            EnvParameter::NO2 => "NO2",
            EnvParameter::PM25 => "PM25",
            EnvParameter::PM10 => "PM10",
        }
    }

    pub fn is_weather(self) -> bool {
        matches!(self, EnvParameter::Temperature | EnvParameter::Rainfall6h | EnvParameter::Wind | EnvParameter::Cloudiness)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSeries {
    pub station_id: String,
    pub pos: LatLon,
    pub parameter: EnvParameter,
    pub samples: Vec<(Epoch, f64)>,
}

impl SensorSeries {
    /// Mean of samples in `[from, to]`, if any.
    pub fn mean_in(&self, from: Epoch, to: Epoch) -> Option<f64> {
        let lo = self.samples.partition_point(|s| s.0 < from);
        let hi = self.samples.partition_point(|s| s.0 <= to);
        (hi > lo).then(|| self.samples[lo..hi].iter().map(|s| s.1).sum::<f64>() / (hi - lo) as f64)
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct Row {
    station_id: String,
    lat: f64,
    lon: f64,
    parameter: String,
    epoch: Epoch,
    value: f64,
}

/// All series grouped by parameter, stations in id order.
#[derive(Debug, Clone, Default)]
pub struct SensorStore {
    series: BTreeMap<EnvParameter, Vec<SensorSeries>>,
}

impl SensorStore {
    pub fn new(series: Vec<SensorSeries>) -> Result<Self, EnvError> {
        let mut by_param: BTreeMap<EnvParameter, Vec<SensorSeries>> = BTreeMap::new();
        for s in series {
            if let Some(w) = s.samples.windows(2).find(|w| w[1].0 <= w[0].0) {
                return Err(EnvError::NonIncreasing { station: s.station_id, parameter: s.parameter.code().into(), epoch: w[1].0 });
            }
            if !s.parameter.is_weather() {
                if let Some(&(_, v)) = s.samples.iter().find(|x| x.1 < 0.0) {
                    return Err(EnvError::NegativeConcentration { station: s.station_id, parameter: s.parameter.code().into(), value: v });
                }
            }
            by_param.entry(s.parameter).or_default().push(s);
        }
        for v in by_param.values_mut() {
            v.sort_by(|a, b| a.station_id.cmp(&b.station_id));
        }
        Ok(Self { series: by_param })
    }

    /// Reads `station_id,lat,lon,parameter,epoch,value` rows in any order.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EnvError> {
        let mut rdr = csv::Reader::from_reader(File::open(path)?);
        let mut grouped: BTreeMap<(String, EnvParameter), SensorSeries> = BTreeMap::new();
        for rec in rdr.deserialize::<Row>() {
            let r = rec?;
            let parameter = EnvParameter::parse(&r.parameter).ok_or_else(|| EnvError::UnknownParameter(r.parameter.clone()))?;
            let pos = LatLon::new(r.lat, r.lon);
            let s = grouped.entry((r.station_id.clone(), parameter)).or_insert_with(|| SensorSeries {
                station_id: r.station_id.clone(),
                pos,
                parameter,
                samples: Vec::new(),
            });
            if s.pos != pos {
                return Err(EnvError::StationMoved(r.station_id));
            }
            s.samples.push((r.epoch, r.value));
        }
        let series = grouped
            .into_values()
            .map(|mut s| {
                s.samples.sort_by_key(|x| x.0);
                s
            })
            .collect();
        Self::new(series)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), EnvError> {
        let mut w = csv::Writer::from_path(path)?;
        for s in self.series.values().flatten() {
            for &(epoch, value) in &s.samples {
                w.serialize(Row {
                    station_id: s.station_id.clone(),
                    lat: s.pos.lat,
                    lon: s.pos.lon,
                    parameter: s.parameter.code().into(),
                    epoch,
                    value,
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn series(&self, p: EnvParameter) -> &[SensorSeries] {
        self.series.get(&p).map(Vec::as_slice).unwrap_or(&[])
    }
}

pub fn window_label(w: i64) -> String {
    if w % 3600 == 0 {
        format!("{}h", w / 3600)
    } else {
        format!("{w}s")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvFeature {
    pub name: String,
    pub parameter: EnvParameter,
    pub value: f64,
}

/// Feature names in emission order: `avg<Param>_<w>` then `has<Param>_<w>` per window.
pub fn env_feature_names(windows: &[i64]) -> Vec<(String, EnvParameter)> {
    let mut out = Vec::new();
    for p in EnvParameter::ALL {
        for &w in windows {
            out.push((format!("avg{}_{}", p.label(), window_label(w)), p));
            out.push((format!("has{}_{}", p.label(), window_label(w)), p));
        }
    }
    out
}

/// Averages over `[t - w, t]` for each parameter and window, taken from the
/// nearest station with at least one sample in that window (ties by station id).
pub fn aggregate_env(store: &SensorStore, location: LatLon, t: Epoch, windows: &[i64], sentinel: f64) -> Vec<EnvFeature> {
    let mut out = Vec::new();
    for p in EnvParameter::ALL {
        let mut stations: Vec<(f64, &SensorSeries)> = store.series(p).iter().map(|s| (haversine_m(location, s.pos), s)).collect();
        stations.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.station_id.cmp(&b.1.station_id)));
        for &w in windows {
            let found = stations.iter().find_map(|(_, s)| s.mean_in(t - w, t));
            let label = window_label(w);
            out.push(EnvFeature { name: format!("avg{}_{label}", p.label()), parameter: p, value: found.unwrap_or(sentinel) });
            out.push(EnvFeature { name: format!("has{}_{label}", p.label()), parameter: p, value: if found.is_some() { 1.0 } else { 0.0 } });
        }
    }
    out
}
