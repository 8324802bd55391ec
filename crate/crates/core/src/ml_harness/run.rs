use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::metrics::{evaluate, Scores};
use super::scenario::{select_features, Scenario};
use super::split::{grouped_kfold, split_holdout};
use super::{HarnessError, Learner, Model, TrainData};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub k: usize,
    pub alpha: f64,
    pub seed: u64,
    pub permutation_repeats: usize,
    /// Keeps only the first points of every grid; `None` uses full grids.
    pub grid_points: Option<usize>,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self { k: 10, alpha: 0.2, seed: 0, permutation_repeats: 3, grid_points: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub method: String,
    pub params: String,
    pub fold: usize,
    pub kappa: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub method: String,
    pub params: String,
    pub mean_kappa: f64,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub feature: String,
    pub mean_kappa_drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub scenario: String,
    pub features: usize,
    pub train_instances: usize,
    pub final_instances: usize,
    pub folds: Vec<FoldResult>,
    pub grid: Vec<GridSummary>,
    /// Best grid point of each method by mean CV kappa.
    pub per_method: Vec<GridSummary>,
    pub best: GridSummary,
    pub final_scores: Scores,
    pub importance: Vec<Importance>,
}

/// Deterministic per-task seed independent of scheduling order.
pub fn mix_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut z = seed;
    for &p in parts {
        z = z.wrapping_add(p.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

struct Split {
    x: Vec<Vec<f64>>,
    y: Vec<usize>,
}

impl Split {
    fn of(ds: &Dataset, rows: &[usize]) -> Self {
        Split { x: rows.iter().map(|&r| ds.x[r].clone()).collect(), y: rows.iter().map(|&r| ds.y[r]).collect() }
    }

    fn data(&self, n_classes: usize) -> TrainData<'_> {
        TrainData { x: &self.x, y: &self.y, n_classes }
    }
}

pub fn predict_all(model: &dyn Model, x: &[Vec<f64>]) -> Vec<usize> {
    x.iter().map(|r| model.predict(r)).collect()
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Mean kappa decrease when one feature column is shuffled, per feature,
/// sorted by decrease descending and then by name.
pub fn permutation_importance(
    model: &dyn Model,
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    names: &[String],
    repeats: usize,
    seed: u64,
) -> Result<Vec<Importance>, HarnessError> {
    if repeats < 1 {
        return Err(HarnessError::Config("permutation repeats must be at least 1".into()));
    }
    let base = evaluate(y, &predict_all(model, x), n_classes)?.kappa;
    let mut out: Vec<Importance> = names
        .par_iter()
        .enumerate()
        .map(|(f, name)| {
            let mut drops = Vec::with_capacity(repeats);
            let mut shuffled = x.to_vec();
            for r in 0..repeats {
                let mut col: Vec<f64> = x.iter().map(|row| row[f]).collect();
                col.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(seed, &[f as u64, r as u64])));
                for (row, v) in shuffled.iter_mut().zip(col) {
                    row[f] = v;
                }
                let k = evaluate(y, &predict_all(model, &shuffled), n_classes)?.kappa;
                drops.push(base - k);
            }
            Ok(Importance { feature: name.clone(), mean_kappa_drop: mean(drops.into_iter()) })
        })
        .collect::<Result<_, HarnessError>>()?;
    out.sort_by(|a, b| b.mean_kappa_drop.total_cmp(&a.mean_kappa_drop).then_with(|| a.feature.cmp(&b.feature)));
    Ok(out)
}

/// Selects features, holds out the most recent days, cross-validates every
/// grid point of every method with grouped folds, retrains the best one on
/// all training data and scores it on the holdout.
pub fn run_scenario(ds: &Dataset, scenario: &Scenario, learners: &[Box<dyn Learner>], settings: &RunSettings) -> Result<ModelReport, HarnessError> {
    if learners.is_empty() {
        return Err(HarnessError::Config("no methods configured".into()));
    }
    let ds = select_features(&ds.sorted_by_time(), scenario);
    let n_classes = ds.n_classes();
    let (train_rows, final_rows) = split_holdout(&ds, settings.alpha)?;
    let train = ds.rows(&train_rows);
    let k = settings.k;
    let fold_of = grouped_kfold(&train.groups, k, settings.seed)?;
    let fold_rows: Vec<Vec<usize>> = (0..k).map(|f| (0..train.len()).filter(|&i| fold_of[i] == f).collect()).collect();

    let grids: Vec<Vec<String>> = learners
        .iter()
        .map(|l| {
            let mut g = l.grid();
            if let Some(n) = settings.grid_points {
                g.truncate(n.max(1));
            }
            g
        })
        .collect();
    let tasks: Vec<(usize, usize, usize)> =
        grids.iter().enumerate().flat_map(|(m, g)| (0..g.len()).flat_map(move |p| (0..k).map(move |f| (m, p, f)))).collect();
    let folds: Vec<FoldResult> = tasks
        .par_iter()
        .map(|&(m, p, f)| {
            let test = Split::of(&train, &fold_rows[f]);
            let valid = Split::of(&train, &fold_rows[(f + 1) % k]);
            let learn_rows: Vec<usize> = (0..train.len()).filter(|&i| fold_of[i] != f && fold_of[i] != (f + 1) % k).collect();
            let learn = Split::of(&train, &learn_rows);
            let model = learners[m].fit(p, &learn.data(n_classes), &valid.data(n_classes), mix_seed(settings.seed, &[m as u64, p as u64, f as u64]))?;
            let s = evaluate(&test.y, &predict_all(model.as_ref(), &test.x), n_classes)?;
            Ok(FoldResult { method: learners[m].name().to_string(), params: grids[m][p].clone(), fold: f, kappa: s.kappa, accuracy: s.accuracy })
        })
        .collect::<Result<_, HarnessError>>()?;

    let mut grid = Vec::new();
    let mut per_method = Vec::new();
    let mut best: Option<(usize, usize, GridSummary)> = None;
    for (m, g) in grids.iter().enumerate() {
        let mut method_best: Option<GridSummary> = None;
        for (p, params) in g.iter().enumerate() {
            let rows = &folds[tasks.iter().position(|&t| t == (m, p, 0)).unwrap()..][..k];
            let s = GridSummary {
                method: learners[m].name().to_string(),
                params: params.clone(),
                mean_kappa: mean(rows.iter().map(|r| r.kappa)),
                mean_accuracy: mean(rows.iter().map(|r| r.accuracy)),
            };
            if method_best.as_ref().is_none_or(|b| s.mean_kappa > b.mean_kappa) {
                method_best = Some(s.clone());
            }
            if best.as_ref().is_none_or(|b| s.mean_kappa > b.2.mean_kappa) {
                best = Some((m, p, s.clone()));
            }
            grid.push(s);
        }
        per_method.extend(method_best);
    }
    let (bm, bp, best) = best.expect("at least one grid point");

    let all = Split::of(&train, &(0..train.len()).collect::<Vec<_>>());
    let model = learners[bm].fit(bp, &all.data(n_classes), &all.data(n_classes), mix_seed(settings.seed, &[bm as u64, bp as u64, u64::MAX]))?;
    let holdout = Split::of(&ds, &final_rows);
    let final_scores = evaluate(&holdout.y, &predict_all(model.as_ref(), &holdout.x), n_classes)?;
    let names: Vec<String> = ds.columns.iter().map(|c| c.name.clone()).collect();
    let importance = permutation_importance(model.as_ref(), &holdout.x, &holdout.y, n_classes, &names, settings.permutation_repeats, settings.seed)?;

    Ok(ModelReport {
        scenario: scenario.name.clone(),
        features: ds.columns.len(),
        train_instances: train.len(),
        final_instances: final_rows.len(),
        folds,
        grid,
        per_method,
        best,
        final_scores,
        importance,
    })
}

/// Flat per-fold results: scenario, method, hyperparams, fold, kappa, accuracy.
pub fn write_results_csv(path: impl AsRef<Path>, reports: &[ModelReport]) -> Result<(), HarnessError> {
    let path = path.as_ref();
    let err = |e: csv::Error| HarnessError::Io { path: path.to_path_buf(), source: e.into() };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["scenario", "method", "hyperparams", "fold", "kappa", "accuracy"]).map_err(err)?;
    for r in reports {
        for f in &r.folds {
            w.write_record([r.scenario.as_str(), &f.method, &f.params, &f.fold.to_string(), &f.kappa.to_string(), &f.accuracy.to_string()])
                .map_err(err)?;
        }
    }
    w.flush().map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })
}
