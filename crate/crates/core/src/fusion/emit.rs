use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{feature_schema, fuse_trip, FeatureTag, FusionParams, Instance, Services};
use super::survey::Trip;
use super::FusionError;
use crate::clock::ServiceClock;

pub const SIGN_CONVENTION: &str = "DurationDifferenceAToB = duration(A) - duration(B); DurationRatioAToB = duration(A) / duration(B)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentinels {
    pub los: f64,
    pub env: f64,
}

/// Summary written next to the instance file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub instances: usize,
    pub respondents: usize,
    pub feature_counts: BTreeMap<String, usize>,
    pub warnings: BTreeMap<String, usize>,
    pub sign_convention: String,
    pub sentinels: Sentinels,
}

/// Fuses sorted trips concurrently; output keeps input order.
pub fn fuse_all(trips: &[Trip], services: &Services) -> Vec<Instance> {
    trips.par_iter().map(|t| fuse_trip(t, services)).collect()
}

fn fmt_value(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Header of the instance file: identifiers, label, then `name@TAG` columns.
pub fn instance_header(answer_columns: &[String], params: &FusionParams) -> Vec<String> {
    let mut h: Vec<String> = ["respondent_id", "trip_ordinal", "departure_epoch", "departure_local", "label"].iter().map(|s| s.to_string()).collect();
    h.extend(answer_columns.iter().map(|c| format!("{c}@{}", FeatureTag::Survey.as_str())));
    h.extend(feature_schema(params).into_iter().map(|(t, n)| format!("{n}@{}", t.as_str())));
    h
}

/// Writes one CSV row per instance in the given order.
pub fn write_instances(
    path: impl AsRef<Path>,
    answer_columns: &[String],
    params: &FusionParams,
    clock: &ServiceClock,
    instances: &[Instance],
) -> Result<(), FusionError> {
    let path = path.as_ref();
    let schema = feature_schema(params);
    let file = File::create(path).map_err(|source| FusionError::Io { path: path.to_path_buf(), source })?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let err = |e: csv::Error| FusionError::Survey { path: path.to_path_buf(), message: e.to_string() };
    w.write_record(instance_header(answer_columns, params)).map_err(err)?;
    for inst in instances {
        let names_match = inst.features.len() == schema.len() && inst.features.iter().zip(&schema).all(|(f, (t, n))| f.tag == *t && &f.name == n);
        if !names_match || inst.survey.len() != answer_columns.len() {
            return Err(FusionError::Schema(format!("instance {}#{} does not follow the column schema", inst.respondent_id, inst.ordinal)));
        }
        let mut rec = vec![
            inst.respondent_id.clone(),
            inst.ordinal.to_string(),
            inst.departure.to_string(),
            clock.local(inst.departure).format("%Y-%m-%d %H:%M:%S").to_string(),
            inst.label.as_str().to_string(),
        ];
        rec.extend(inst.survey.iter().cloned());
        rec.extend(inst.features.iter().map(|f| fmt_value(f.value)));
        w.write_record(&rec).map_err(err)?;
    }
    let mut inner = w.into_inner().map_err(|e| FusionError::Io { path: path.to_path_buf(), source: e.into_error() })?;
    inner.flush().map_err(|source| FusionError::Io { path: path.to_path_buf(), source })
}

pub fn build_manifest(
    config_hash: &str,
    seed: u64,
    answer_columns: &[String],
    params: &FusionParams,
    instances: &[Instance],
    respondents: usize,
    skipped_trips: usize,
) -> RunManifest {
    let mut feature_counts: BTreeMap<String, usize> = FeatureTag::ALL.iter().map(|t| (t.as_str().to_string(), 0)).collect();
    *feature_counts.get_mut(FeatureTag::Survey.as_str()).unwrap() = answer_columns.len();
    for (t, _) in feature_schema(params) {
        *feature_counts.get_mut(t.as_str()).unwrap() += 1;
    }
    let mut warnings = BTreeMap::new();
    warnings.insert("skipped_trips".to_string(), skipped_trips);
    for t in FeatureTag::ALL.iter().filter(|t| **t != FeatureTag::Survey) {
        let n = instances.iter().filter(|i| i.degraded.contains(t)).count();
        warnings.insert(format!("degraded_{}", t.as_str()), n);
    }
    RunManifest {
        config_hash: config_hash.to_string(),
        seed,
        instances: instances.len(),
        respondents,
        feature_counts,
        warnings,
        sign_convention: SIGN_CONVENTION.to_string(),
        sentinels: Sentinels { los: params.los_sentinel, env: params.env_sentinel },
    }
}

pub fn write_manifest(path: impl AsRef<Path>, manifest: &RunManifest) -> Result<(), FusionError> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(manifest).expect("manifest serialises");
    std::fs::write(path, text + "\n").map_err(|source| FusionError::Io { path: path.to_path_buf(), source })
}
