//! Run configuration shared by every pipeline stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::router::{ModeChoiceWindow, PricingTable, Speeds, TransitParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read configuration {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid configuration: {0}")]
    Parse(String),
    #[error("paths.{field} = {path} does not exist")]
    MissingPath { field: &'static str, path: PathBuf },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub streets_nodes: Option<PathBuf>,
    pub streets_edges: Option<PathBuf>,
    pub streets_geojson: Option<PathBuf>,
    pub gtfs: PathBuf,
    /// Directory holding `real_gtfs/<date>/` feeds.
    pub real_gtfs: Option<PathBuf>,
    pub segments: Option<PathBuf>,
    pub zones: Option<PathBuf>,
    pub matrices: Option<PathBuf>,
    pub sensors: Option<PathBuf>,
    pub spatial: Option<PathBuf>,
    pub survey: PathBuf,
    pub output: PathBuf,
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.gtfs, &mut self.survey, &mut self.output] {
            fix(p);
        }
        for p in [
            &mut self.streets_nodes,
            &mut self.streets_edges,
            &mut self.streets_geojson,
            &mut self.real_gtfs,
            &mut self.segments,
            &mut self.zones,
            &mut self.matrices,
            &mut self.sensors,
            &mut self.spatial,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn instances(&self) -> PathBuf {
        self.output.join("instances.csv")
    }

    pub fn manifest(&self) -> PathBuf {
        self.output.join("manifest.json")
    }

    pub fn report(&self) -> PathBuf {
        self.output.join("report.json")
    }

    pub fn results(&self) -> PathBuf {
        self.output.join("results.csv")
    }

    /// Every configured input must exist.
    pub fn check_inputs(&self) -> Result<(), ConfigError> {
        let required = [("gtfs", Some(&self.gtfs)), ("survey", Some(&self.survey))];
        let optional = [
            ("streets_nodes", self.streets_nodes.as_ref()),
            ("streets_edges", self.streets_edges.as_ref()),
            ("streets_geojson", self.streets_geojson.as_ref()),
            ("real_gtfs", self.real_gtfs.as_ref()),
            ("segments", self.segments.as_ref()),
            ("zones", self.zones.as_ref()),
            ("matrices", self.matrices.as_ref()),
            ("sensors", self.sensors.as_ref()),
            ("spatial", self.spatial.as_ref()),
        ];
        for (field, p) in required.into_iter().chain(optional) {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(ConfigError::MissingPath { field, path: p.clone() });
                }
            }
        }
        let csv_pair = self.streets_nodes.is_some() && self.streets_edges.is_some();
        if !csv_pair && self.streets_geojson.is_none() {
            return Err(ConfigError::Invalid("street graph needs streets_nodes and streets_edges, or streets_geojson".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct ClockConfig {
    /// Local time minus UTC, in seconds.
    pub utc_offset_s: i32,
}


#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoutingConfig {
    pub max_access_m: f64,
    pub transfer_radius_m: f64,
    pub max_transfers: usize,
    pub max_results: usize,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        let p = TransitParams::default();
        Self { max_access_m: p.max_access_m, transfer_radius_m: p.transfer_radius_m, max_transfers: p.max_transfers, max_results: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sentinels {
    pub los: f64,
    pub env: f64,
}

impl Default for Sentinels {
    fn default() -> Self {
        Self { los: -1.0, env: -9999.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub built_env_radius_m: f64,
    pub env_windows_s: Vec<i64>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { built_env_radius_m: 500.0, env_windows_s: vec![7200, 86_400] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub scenarios: Vec<String>,
    pub methods: Vec<String>,
    pub k: usize,
    pub alpha: f64,
    pub permutation_repeats: usize,
    /// Keeps only the first `n` points of each method's grid; `None` uses the full grid.
    pub grid_points: Option<usize>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            scenarios: ["S_ONLY", "S_P_LOS", "S_ALL"].map(String::from).to_vec(),
            methods: ["naive_bayes", "decision_tree", "random_forest", "knn"].map(String::from).to_vec(),
            k: 10,
            alpha: 0.2,
            permutation_repeats: 3,
            grid_points: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    #[serde(default)]
    pub clock: ClockConfig,
    #[serde(default)]
    pub window: ModeChoiceWindow,
    #[serde(default)]
    pub speeds: Speeds,
    #[serde(default)]
    pub routing: RoutingConfig,
    #[serde(default)]
    pub pricing: PricingTable,
    #[serde(default)]
    pub sentinels: Sentinels,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
}

fn set_path(root: &mut toml::Value, key: &str, value: toml::Value) -> Result<(), ConfigError> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = cur.as_table_mut().ok_or_else(|| ConfigError::Invalid(format!("{key}: not a table")))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), value);
            return Ok(());
        }
        cur = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
    }
    Ok(())
}

impl RunConfig {
    /// Parses TOML text, applies `key.path=value` overrides and resolves
    /// relative paths against `base`.
    pub fn from_toml(text: &str, base: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut value: toml::Value = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for o in overrides {
            let (key, raw) = o.split_once('=').ok_or_else(|| ConfigError::Invalid(format!("override {o} is not key=value")))?;
            let parsed = toml::from_str::<toml::Table>(&format!("v = {raw}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.to_string()));
            set_path(&mut value, key.trim(), parsed)?;
        }
        let mut cfg: RunConfig = value.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.paths.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base, overrides)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        ModeChoiceWindow::new(self.window.delta_s, self.window.delta_f).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let s = self.speeds;
        if !(s.walk_mps > 0.0 && s.cycle_mps > 0.0 && s.car_mps > 0.0) {
            return Err(ConfigError::Invalid("speeds must be positive".into()));
        }
        if !(self.features.built_env_radius_m > 0.0) {
            return Err(ConfigError::Invalid("features.built_env_radius_m must be positive".into()));
        }
        if self.features.env_windows_s.iter().any(|&w| w <= 0) {
            return Err(ConfigError::Invalid("features.env_windows_s must be positive".into()));
        }
        if self.routing.max_results == 0 {
            return Err(ConfigError::Invalid("routing.max_results must be at least 1".into()));
        }
        let b = self.pricing.bounds_s;
        if !(b[0] <= b[1] && b[1] <= b[2]) {
            return Err(ConfigError::Invalid("pricing.bounds_s must be non-decreasing".into()));
        }
        Ok(())
    }

    pub fn transit_params(&self) -> TransitParams {
        TransitParams {
            walk_mps: self.speeds.walk_mps,
            max_access_m: self.routing.max_access_m,
            transfer_radius_m: self.routing.transfer_radius_m,
            max_transfers: self.routing.max_transfers,
        }
    }

    /// SHA-256 over the canonical JSON form of the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("configuration serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 7
[paths]
streets_nodes = "nodes.csv"
streets_edges = "edges.csv"
gtfs = "gtfs"
survey = "survey.csv"
output = "out"
"#;

    #[test]
    fn defaults_and_resolution() {
        let c = RunConfig::from_toml(MINIMAL, Path::new("/data"), &[]).unwrap();
        assert_eq!(c.window, ModeChoiceWindow { delta_s: 300, delta_f: 600 });
        assert_eq!(c.paths.gtfs, PathBuf::from("/data/gtfs"));
        assert_eq!(c.evaluation.k, 10);
        assert_eq!(c.evaluation.alpha, 0.2);
        assert_eq!(c.sentinels.env, -9999.0);
    }

    #[test]
    fn seed_is_mandatory() {
        let text = MINIMAL.replace("seed = 7", "");
        assert!(matches!(RunConfig::from_toml(&text, Path::new("."), &[]), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn overrides_and_hash_sensitivity() {
        let a = RunConfig::from_toml(MINIMAL, Path::new("."), &[]).unwrap();
        let b = RunConfig::from_toml(MINIMAL, Path::new("."), &["window.delta_f=900".into()]).unwrap();
        let c = RunConfig::from_toml(MINIMAL, Path::new("."), &["evaluation.scenarios=[\"S_ONLY\"]".into()]).unwrap();
        assert_eq!(b.window.delta_f, 900);
        assert_eq!(c.evaluation.scenarios, vec!["S_ONLY".to_string()]);
        assert_ne!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash(), RunConfig::from_toml(MINIMAL, Path::new("."), &[]).unwrap().hash());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_toml(MINIMAL, Path::new("."), &["window.delta_s=0".into(), "window.delta_f=0".into()]).is_err());
        assert!(RunConfig::from_toml(MINIMAL, Path::new("."), &["unknown=1".into()]).is_err());
    }

    #[test]
    fn missing_inputs_detected() {
        let c = RunConfig::from_toml(MINIMAL, Path::new("/nonexistent"), &[]).unwrap();
        assert!(matches!(c.paths.check_inputs(), Err(ConfigError::MissingPath { field: "gtfs", .. })));
    }
}
