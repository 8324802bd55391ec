//! Scenario-based training and evaluation of mode-choice classifiers:
//! chronological holdout, grouped cross-validation, hyperparameter grids,
//! kappa-based model selection and permutation importance.

mod bayes;
mod data;
mod knn;
mod metrics;
mod run;
mod scenario;
mod split;
mod tree;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bayes::{NaiveBayes, NaiveBayesLearner, NB_BINS};
pub use data::{read_instances, Column, Dataset};
pub use knn::{Knn, KnnLearner, Standardizer, SENTINEL_Z};
pub use metrics::{confusion, evaluate, scores_from_confusion, Scores};
pub use run::{mix_seed, permutation_importance, predict_all, run_scenario, write_results_csv, FoldResult, GridSummary, Importance, ModelReport, RunSettings};
pub use scenario::{select_features, Scenario, SCENARIO_NAMES};
pub use split::{grouped_kfold, split_holdout};
pub use tree::{bin_thresholds, Binned, DecisionTreeLearner, Forest, ForestParams, MaxFeatures, RandomForestLearner, Tree, TreeParams, MAX_BINS};

use crate::config::RunConfig;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid evaluation setup: {0}")]
    Config(String),
    #[error("cannot read instances {path}: {message}")]
    Instances { path: PathBuf, message: String },
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("evaluation set is empty")]
    EmptyEval,
    #[error("learning set has fewer than two classes")]
    DegenerateLabel,
}

/// Training rows handed to a learner.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub x: &'a [Vec<f64>],
    pub y: &'a [usize],
    pub n_classes: usize,
}

impl TrainData<'_> {
    pub fn check(&self) -> Result<(), HarnessError> {
        let first = self.y.first().ok_or(HarnessError::DegenerateLabel)?;
        if self.y.iter().all(|c| c == first) {
            return Err(HarnessError::DegenerateLabel);
        }
        Ok(())
    }
}

pub trait Model: Send + Sync {
    fn predict(&self, row: &[f64]) -> usize;
}

/// A classifier family with a hyperparameter grid. New methods plug in here.
pub trait Learner: Send + Sync {
    fn name(&self) -> &str;
    /// Labels of the grid points, in evaluation order.
    fn grid(&self) -> Vec<String>;
    /// `valid` is consulted only by methods that prune or stop early.
    fn fit(&self, point: usize, learn: &TrainData, valid: &TrainData, seed: u64) -> Result<Box<dyn Model>, HarnessError>;
}

pub const METHOD_NAMES: [&str; 4] = ["naive_bayes", "decision_tree", "random_forest", "knn"];

pub fn learner_by_name(name: &str, sentinels: &[f64]) -> Result<Box<dyn Learner>, HarnessError> {
    Ok(match name {
        "naive_bayes" => Box::new(NaiveBayesLearner::default()),
        "decision_tree" => Box::new(DecisionTreeLearner::default()),
        "random_forest" => Box::new(RandomForestLearner::default()),
        "knn" => Box::new(KnnLearner::new(sentinels.to_vec())),
        _ => return Err(HarnessError::Config(format!("unknown method {name}"))),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config_hash: String,
    pub seed: u64,
    pub instances: usize,
    pub classes: Vec<String>,
    pub scenarios: Vec<ModelReport>,
}

/// Runs every configured scenario on an instance file and writes the
/// report JSON and per-fold CSV into the output directory.
pub fn run_evaluation(cfg: &RunConfig, instances: &std::path::Path) -> Result<EvaluationReport, HarnessError> {
    let e = &cfg.evaluation;
    let scenarios: Vec<Scenario> = e.scenarios.iter().map(|s| Scenario::named(s)).collect::<Result<_, _>>()?;
    let sentinels = [cfg.sentinels.los, cfg.sentinels.env];
    let learners: Vec<Box<dyn Learner>> = e.methods.iter().map(|m| learner_by_name(m, &sentinels)).collect::<Result<_, _>>()?;
    if scenarios.is_empty() {
        return Err(HarnessError::Config("no scenarios configured".into()));
    }
    let ds = read_instances(instances, cfg.sentinels.los)?;
    let settings = RunSettings { k: e.k, alpha: e.alpha, seed: cfg.seed, permutation_repeats: e.permutation_repeats, grid_points: e.grid_points };
    let reports: Vec<ModelReport> = scenarios.iter().map(|s| run_scenario(&ds, s, &learners, &settings)).collect::<Result<_, _>>()?;
    let out = &cfg.paths.output;
    std::fs::create_dir_all(out).map_err(|source| HarnessError::Io { path: out.clone(), source })?;
    let report = EvaluationReport { config_hash: cfg.hash(), seed: cfg.seed, instances: ds.len(), classes: ds.classes.clone(), scenarios: reports };
    let text = serde_json::to_string_pretty(&report).expect("report serialises");
    let path = cfg.paths.report();
    std::fs::write(&path, text + "\n").map_err(|source| HarnessError::Io { path, source })?;
    write_results_csv(cfg.paths.results(), &report.scenarios)?;
    Ok(report)
}
