//! Turns trip diaries into labelled instances by joining every trip with
//! level-of-service, experience, environmental and built-environment features.

mod emit;
mod features;
mod survey;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use thiserror::Error;

pub use emit::{build_manifest, fuse_all, instance_header, write_instances, write_manifest, RunManifest, Sentinels, SIGN_CONVENTION};
pub use features::{
    diff_operand_tags, diff_specs, differential_features, feature_schema, fuse_trip, DiffSpec, Feature, FeatureTag, FusionParams, Instance, Services,
};
pub use survey::{extract_trips, parse_local_datetime, sort_trips, write_survey, Survey, SurveyRow, SurveyTrip, TravelMode, Trip};

use crate::built_env::SpatialDb;
use crate::car_model::{ZoneMatrices, ZoneSet};
use crate::clock::{preceding_working_day, ServiceClock};
use crate::config::RunConfig;
use crate::env_features::SensorStore;
use crate::gtfs::{parse_gtfs, real_gtfs_dir};
use crate::router::StreetGraph;
use crate::vehicle_flow::SegmentStore;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("cannot read survey {path}: {message}")]
    Survey { path: PathBuf, message: String },
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot load {store}: {message}")]
    Store { store: &'static str, message: String },
    #[error("column schema violated: {0}")]
    Schema(String),
}

impl FusionParams {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            window: cfg.window,
            speeds: cfg.speeds,
            pricing: cfg.pricing.clone(),
            max_results: cfg.routing.max_results,
            los_sentinel: cfg.sentinels.los,
            env_sentinel: cfg.sentinels.env,
            built_env_radius_m: cfg.features.built_env_radius_m,
            env_windows_s: cfg.features.env_windows_s.clone(),
        }
    }
}

fn store_err(store: &'static str) -> impl Fn(&dyn std::fmt::Display) -> FusionError {
    move |e| FusionError::Store { store, message: e.to_string() }
}

impl Services {
    /// Loads every configured store and prepares networks for `trips`.
    /// Real timetables missing for a needed day are left out.
    pub fn load(cfg: &RunConfig, trips: &[Trip]) -> Result<Self, FusionError> {
        let p = &cfg.paths;
        let clock = ServiceClock::new(cfg.clock.utc_offset_s);
        let graph = match (&p.streets_nodes, &p.streets_edges, &p.streets_geojson) {
            (Some(n), Some(e), _) => StreetGraph::from_csv(n, e),
            (_, _, Some(g)) => StreetGraph::from_geojson(g),
            _ => return Err(FusionError::Store { store: "streets", message: "no street graph configured".into() }),
        }
        .map_err(|e| store_err("streets")(&e))?;
        let planned = parse_gtfs(&p.gtfs).map_err(|e| store_err("gtfs")(&e))?;
        let mut s = Services::new(clock, Arc::new(graph), planned, cfg.transit_params(), FusionParams::from_config(cfg));

        let prev_days: std::collections::BTreeSet<_> = trips.iter().map(|t| preceding_working_day(clock.date_of(t.departure))).collect();
        if let Some(root) = &p.real_gtfs {
            let mut real = BTreeMap::new();
            for &d in &prev_days {
                let dir = real_gtfs_dir(root, d);
                if dir.exists() {
                    real.insert(d, parse_gtfs(&dir).map_err(|e| store_err("real_gtfs")(&e))?);
                }
            }
            s.real = real;
        }
        if let Some(root) = &p.segments {
            let days: Vec<_> = prev_days.iter().copied().collect();
            s.segments = SegmentStore::open_dates(root, &days).map_err(|e| store_err("segments")(&e))?;
        }
        if let (Some(z), Some(m)) = (&p.zones, &p.matrices) {
            let zones = ZoneSet::from_geojson(z).map_err(|e| store_err("zones")(&e))?;
            let matrices = ZoneMatrices::load_dir(m, &zones).map_err(|e| store_err("matrices")(&e))?;
            s.zones = Some((zones, matrices));
        }
        if let Some(path) = &p.sensors {
            s.sensors = Some(SensorStore::load(path).map_err(|e| store_err("sensors")(&e))?);
        }
        if let Some(dir) = &p.spatial {
            s.spatial = Some(SpatialDb::load_dir(dir).map_err(|e| store_err("spatial")(&e))?);
        }
        s.prepare(trips);
        Ok(s)
    }
}

/// Outcome of a full fusion run.
#[derive(Debug, Clone)]
pub struct FusionRun {
    pub survey: Survey,
    pub instances: Vec<Instance>,
    pub manifest: RunManifest,
}

/// Reads the survey, fuses every trip and writes instances plus manifest
/// into the configured output directory.
pub fn run_fusion(cfg: &RunConfig) -> Result<FusionRun, FusionError> {
    let clock = ServiceClock::new(cfg.clock.utc_offset_s);
    let mut survey = extract_trips(&cfg.paths.survey, &clock)?;
    sort_trips(&mut survey.trips);
    let services = Services::load(cfg, &survey.trips)?;
    let instances = fuse_all(&survey.trips, &services);
    let out = &cfg.paths.output;
    std::fs::create_dir_all(out).map_err(|source| FusionError::Io { path: out.clone(), source })?;
    write_instances(cfg.paths.instances(), &survey.answer_columns, &services.params, &clock, &instances)?;
    let manifest = build_manifest(&cfg.hash(), cfg.seed, &survey.answer_columns, &services.params, &instances, survey.respondents, survey.skipped_trips);
    write_manifest(cfg.paths.manifest(), &manifest)?;
    Ok(FusionRun { survey, instances, manifest })
}
