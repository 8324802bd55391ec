use std::collections::{BTreeMap, BTreeSet};

use chrono::{Duration, NaiveDate};
use modefusion::fusion::FeatureTag;
use modefusion::ml_harness::{
    evaluate, grouped_kfold, permutation_importance, predict_all, read_instances, run_scenario, scores_from_confusion, select_features, split_holdout,
    Binned, Column, Dataset, DecisionTreeLearner, Forest, ForestParams, HarnessError, Knn, KnnLearner, Learner, MaxFeatures, Model, NaiveBayesLearner,
    RandomForestLearner, RunSettings, Scenario, TrainData, Tree, TreeParams, MAX_BINS, SCENARIO_NAMES,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn kappa_oracle(m: &[Vec<u64>]) -> (f64, f64) {
    let k = m.len();
    let n: f64 = m.iter().flatten().sum::<u64>() as f64;
    let p_o = (0..k).map(|i| m[i][i]).sum::<u64>() as f64 / n;
    let p_e: f64 = (0..k)
        .map(|i| {
            let row: u64 = m[i].iter().sum();
            let col: u64 = m.iter().map(|r| r[i]).sum();
            row as f64 / n * col as f64 / n
        })
        .sum();
    (p_o, (p_o - p_e) / (1.0 - p_e))
}

#[test]
fn kappa_on_hand_matrix() {
    let s = scores_from_confusion(&[vec![50, 10], vec![5, 35]]).unwrap();
    assert!((s.accuracy - 0.85).abs() < 1e-12);
    assert!((s.kappa - 0.6939).abs() < 5e-4, "{}", s.kappa);
}

#[test]
fn kappa_reference_cases() {
    let perfect = evaluate(&[0, 1, 2, 3, 1], &[0, 1, 2, 3, 1], 4).unwrap();
    assert_eq!((perfect.accuracy, perfect.kappa), (1.0, 1.0));
    let truth: Vec<usize> = (0..40).map(|i| i % 4).collect();
    let constant = evaluate(&truth, &[2; 40], 4).unwrap();
    assert_eq!(constant.accuracy, 0.25);
    assert_eq!(constant.kappa, 0.0);
    assert!(matches!(evaluate(&[], &[], 4), Err(HarnessError::EmptyEval)));
}

proptest! {
    #[test]
    fn kappa_matches_oracle_and_ignores_relabeling(
        cells in prop::collection::vec(0u64..40, 9),
        perm in Just([0usize, 1, 2]).prop_shuffle(),
    ) {
        prop_assume!(cells.iter().sum::<u64>() > 0);
        let m: Vec<Vec<u64>> = cells.chunks(3).map(|c| c.to_vec()).collect();
        let (acc, kappa) = kappa_oracle(&m);
        let s = scores_from_confusion(&m).unwrap();
        prop_assert!((s.accuracy - acc).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&s.accuracy));
        prop_assert!((-1.0..=1.0).contains(&s.kappa));
        if kappa.is_finite() {
            prop_assert!((s.kappa - kappa).abs() < 1e-9);
        }
        let mut p = vec![vec![0u64; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                p[perm[i]][perm[j]] = m[i][j];
            }
        }
        let q = scores_from_confusion(&p).unwrap();
        prop_assert!((q.kappa - s.kappa).abs() < 1e-12);
    }
}

/// Rows of (respondent, day offset, features, label) as a dataset starting on 2023-05-01.
fn dataset(columns: &[(&str, FeatureTag)], rows: &[(String, i64, Vec<f64>, usize)], n_classes: usize) -> Dataset {
    let start = NaiveDate::from_ymd_opt(2023, 5, 1).unwrap();
    Dataset {
        columns: columns.iter().map(|&(n, tag)| Column { name: n.into(), tag }).collect(),
        x: rows.iter().map(|r| r.2.clone()).collect(),
        y: rows.iter().map(|r| r.3).collect(),
        classes: (0..n_classes).map(|c| format!("c{c}")).collect(),
        groups: rows.iter().map(|r| r.0.clone()).collect(),
        ordinals: (0..rows.len()).map(|i| i as u32 + 1).collect(),
        departure: rows.iter().enumerate().map(|(i, r)| r.1 * 86_400 + i as i64).collect(),
        day: rows.iter().map(|r| start + Duration::days(r.1)).collect(),
    }
}

fn per_day(counts: &[usize]) -> Dataset {
    let rows: Vec<_> = counts
        .iter()
        .enumerate()
        .flat_map(|(d, &n)| (0..n).map(move |i| (format!("R{d}_{i}"), d as i64, vec![0.0], i % 2)))
        .collect();
    dataset(&[("f", FeatureTag::CarLos)], &rows, 2)
}

#[test]
fn holdout_takes_whole_trailing_days() {
    let (train, hold) = split_holdout(&per_day(&[10; 10]), 0.2).unwrap();
    assert_eq!((train.len(), hold.len()), (80, 20));
    assert_eq!(hold[0], 80);
    let (_, hold) = split_holdout(&per_day(&[10, 10, 10, 10, 10, 10, 10, 5, 15, 10]), 0.2).unwrap();
    assert_eq!(hold.len(), 25);
    assert!(matches!(split_holdout(&per_day(&[100]), 0.2), Err(HarnessError::Config(_))));
    for alpha in [0.0, 1.0, -0.5, f64::NAN] {
        assert!(matches!(split_holdout(&per_day(&[10; 10]), alpha), Err(HarnessError::Config(_))));
    }
}

proptest! {
    #[test]
    fn holdout_is_the_smallest_whole_day_suffix(counts in prop::collection::vec(1usize..30, 2..15), alpha in 0.05f64..0.6) {
        let ds = per_day(&counts);
        let n = ds.len();
        let need = (alpha * n as f64).ceil() as usize;
        match split_holdout(&ds, alpha) {
            Ok((train, hold)) => {
                prop_assert_eq!(train.len() + hold.len(), n);
                prop_assert!(hold.len() >= need);
                prop_assert!(train.iter().all(|&i| i < hold[0]));
                prop_assert!(ds.day[hold[0] - 1] < ds.day[hold[0]]);
                let first_day = ds.day[hold[0]];
                let first_day_size = hold.iter().filter(|&&i| ds.day[i] == first_day).count();
                prop_assert!(hold.len() - first_day_size < need);
            }
            Err(_) => prop_assert!(counts[1..].iter().sum::<usize>() < need),
        }
    }
}

fn respondents(sizes: &[usize]) -> Vec<String> {
    sizes.iter().enumerate().flat_map(|(g, &s)| std::iter::repeat_n(format!("P{g}"), s)).collect()
}

#[test]
fn folds_keep_respondents_together_and_balance() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sizes: Vec<usize> = (0..100).map(|_| rng.gen_range(1..=4)).collect();
    let groups = respondents(&sizes);
    let folds = grouped_kfold(&groups, 10, 7).unwrap();
    assert_eq!(folds, grouped_kfold(&groups, 10, 7).unwrap());
    let mut per_fold: BTreeMap<usize, BTreeSet<&str>> = BTreeMap::new();
    for (g, &f) in groups.iter().zip(&folds) {
        per_fold.entry(f).or_default().insert(g);
    }
    assert_eq!(per_fold.len(), 10);
    for (f, members) in &per_fold {
        assert!((8..=12).contains(&members.len()), "fold {f} has {} respondents", members.len());
    }
    let three = groups.iter().position(|g| sizes[g[1..].parse::<usize>().unwrap()] == 3).unwrap();
    let fold_of_three: BTreeSet<usize> = groups.iter().zip(&folds).filter(|(g, _)| **g == groups[three]).map(|(_, &f)| f).collect();
    assert_eq!(fold_of_three.len(), 1);
    assert!(matches!(grouped_kfold(&respondents(&[2; 5]), 10, 0), Err(HarnessError::Config(_))));
    assert!(matches!(grouped_kfold(&groups, 2, 0), Err(HarnessError::Config(_))));
}

proptest! {
    #[test]
    fn folds_never_split_a_respondent(sizes in prop::collection::vec(1usize..8, 10..60), k in 3usize..10, seed in any::<u64>()) {
        let groups = respondents(&sizes);
        let folds = grouped_kfold(&groups, k, seed).unwrap();
        let mut fold_of: BTreeMap<&str, usize> = BTreeMap::new();
        for (g, &f) in groups.iter().zip(&folds) {
            prop_assert!(f < k);
            prop_assert_eq!(*fold_of.entry(g).or_insert(f), f);
        }
        let mut load = vec![0usize; k];
        for &f in &folds { load[f] += 1; }
        let max_group = *sizes.iter().max().unwrap();
        prop_assert!(load.iter().max().unwrap() - load.iter().min().unwrap() <= max_group);
    }
}

fn separable(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0), rng.gen_range(0.0..1.0)]).collect();
    let y = x.iter().map(|r| usize::from(r[0] + r[1] > 10.0)).collect();
    (x, y)
}

#[test]
fn full_tree_fits_separable_data() {
    let (x, y) = separable(200, 2);
    let tree = Tree::fit(&Binned::new(&x, MAX_BINS), &y, &vec![1.0; y.len()], 2, TreeParams { max_depth: None, min_leaf: 1, max_features: MaxFeatures::All }, 0);
    assert_eq!(predict_all(&tree, &x), y);
}

#[test]
fn single_unbagged_forest_tree_equals_a_tree() {
    let (x, y) = separable(300, 4);
    let forest = Forest::fit(&x, &y, 2, ForestParams { trees: 1, max_features: MaxFeatures::All, max_depth: None, bootstrap: false }, 11);
    let tree = Tree::fit(&Binned::new(&x, MAX_BINS), &y, &vec![1.0; y.len()], 2, TreeParams { max_depth: None, min_leaf: 1, max_features: MaxFeatures::All }, 99);
    let (probe, _) = separable(500, 5);
    assert_eq!(forest.trees()[0], tree);
    assert_eq!(predict_all(&forest, &probe), predict_all(&tree, &probe));
}

#[test]
fn one_nearest_neighbour_recalls_the_learn_set() {
    let (x, y) = separable(150, 6);
    let knn = Knn::fit(&x, &y, 2, 1, &[-1.0, -9999.0]);
    assert_eq!(predict_all(&knn, &x), y);
}

#[test]
fn single_class_learn_set_is_degenerate() {
    let (x, _) = separable(20, 1);
    let y = vec![1; 20];
    let data = TrainData { x: &x, y: &y, n_classes: 2 };
    let learners: Vec<Box<dyn Learner>> =
        vec![Box::new(NaiveBayesLearner::default()), Box::new(DecisionTreeLearner::default()), Box::new(RandomForestLearner::default()), Box::new(KnnLearner::new(vec![-1.0]))];
    for l in &learners {
        assert!(matches!(l.fit(0, &data, &data, 0), Err(HarnessError::DegenerateLabel)), "{}", l.name());
        assert!(l.grid().len() >= 10, "{}", l.name());
    }
}

#[test]
fn permutation_importance_sanity() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x: Vec<Vec<f64>> = (0..400).map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]).collect();
    let y: Vec<usize> = x.iter().map(|r| usize::from(r[1] > 0.5)).collect();
    let names: Vec<String> = ["noise_a", "signal", "noise_b"].map(String::from).to_vec();
    let stump = Tree::fit(&Binned::new(&x, MAX_BINS), &y, &vec![1.0; 400], 2, TreeParams { max_depth: Some(1), min_leaf: 1, max_features: MaxFeatures::All }, 0);
    assert_eq!(stump.used_features(), vec![1]);
    let imp = permutation_importance(&stump, &x, &y, 2, &names, 3, 5).unwrap();
    let by: BTreeMap<&str, f64> = imp.iter().map(|i| (i.feature.as_str(), i.mean_kappa_drop)).collect();
    assert_eq!(by["noise_a"], 0.0);
    assert_eq!(by["noise_b"], 0.0);
    assert!(by["signal"] > 0.0);
    assert_eq!(imp[0].feature, "signal");
    assert!(matches!(permutation_importance(&stump, &x, &y, 2, &names, 0, 5), Err(HarnessError::Config(_))));

    let y4: Vec<usize> = (0..400).map(|_| rng.gen_range(0..4)).collect();
    let x4: Vec<Vec<f64>> = y4.iter().map(|&c| vec![rng.gen_range(0.0..1.0), c as f64, rng.gen_range(0.0..1.0)]).collect();
    let forest = Forest::fit(&x4, &y4, 4, ForestParams { trees: 30, max_features: MaxFeatures::Sqrt, max_depth: None, bootstrap: true }, 3);
    let imp = permutation_importance(&forest, &x4, &y4, 4, &["a".into(), "copy".into(), "b".into()], 3, 1).unwrap();
    assert_eq!(imp[0].feature, "copy");
}

const TAGGED: [(&str, FeatureTag); 12] = [
    ("age_SURVEY", FeatureTag::Survey),
    ("Duration_WALK", FeatureTag::WalkingLos),
    ("Duration_CYCLE", FeatureTag::CyclingLos),
    ("Duration_CAR", FeatureTag::CarLos),
    ("DurationInTraffic_CAR", FeatureTag::ECarLos),
    ("minDuration_TRANSIT", FeatureTag::PlanPtLos),
    ("minDuration_TRANSIT_REAL", FeatureTag::RealPtLos),
    ("avgSpeed_LOW_TRANSIT", FeatureTag::PtExperience),
    ("avgTemperature_2h", FeatureTag::Weather),
    ("RoadDensity_URBAN", FeatureTag::BuiltEnv),
    ("minDurationRatioCarToTransit_DIFF", FeatureTag::Diff),
    ("minDurationRatioCarToTransitReal_DIFF", FeatureTag::Diff),
];

fn tagged_dataset() -> Dataset {
    let mut cols = TAGGED.to_vec();
    cols.push(("DurationDifferenceCarToWalk_DIFF", FeatureTag::Diff));
    cols.push(("avgNO2_2h", FeatureTag::Pollution));
    let rows = vec![("R".to_string(), 0, vec![1.0; cols.len()], 0), ("Q".to_string(), 0, vec![2.0; cols.len()], 1)];
    dataset(&cols, &rows, 2)
}

fn names(ds: &Dataset) -> Vec<&str> {
    ds.columns.iter().map(|c| c.name.as_str()).collect()
}

#[test]
fn scenario_selection() {
    let ds = tagged_dataset();
    assert_eq!(names(&select_features(&ds, &Scenario::named("S_ONLY").unwrap())), vec!["age_SURVEY"]);
    assert_eq!(
        names(&select_features(&ds, &Scenario::named("S_P_LOS").unwrap())),
        vec!["age_SURVEY", "Duration_WALK", "Duration_CYCLE", "Duration_CAR", "minDuration_TRANSIT", "minDurationRatioCarToTransit_DIFF", "DurationDifferenceCarToWalk_DIFF"]
    );
    assert_eq!(
        names(&select_features(&ds, &Scenario::named("S_R_LOS_TR").unwrap())),
        vec![
            "age_SURVEY",
            "Duration_WALK",
            "Duration_CYCLE",
            "Duration_CAR",
            "DurationInTraffic_CAR",
            "minDuration_TRANSIT_REAL",
            "minDurationRatioCarToTransitReal_DIFF",
            "DurationDifferenceCarToWalk_DIFF"
        ]
    );
    assert_eq!(names(&select_features(&ds, &Scenario::named("S_ENV").unwrap())), vec!["age_SURVEY", "avgTemperature_2h", "avgNO2_2h"]);
    assert_eq!(select_features(&ds, &Scenario::named("S_ALL").unwrap()), ds);
    assert!(!Scenario::new("only_car", [FeatureTag::CarLos]).includes_diff());
    assert!(matches!(Scenario::named("S_NOPE"), Err(HarnessError::Config(_))));
    for name in SCENARIO_NAMES {
        let s = Scenario::named(name).unwrap();
        assert!(s.tags.contains(&FeatureTag::Survey));
        let once = select_features(&ds, &s);
        assert_eq!(select_features(&once, &s), once);
        let reversed: Vec<usize> = (0..ds.columns.len()).rev().collect();
        let mut a: Vec<String> = names(&select_features(&ds.columns_subset(&reversed), &s)).into_iter().map(String::from).collect();
        let mut b: Vec<String> = names(&once).into_iter().map(String::from).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }
}

#[test]
fn instance_reader_encodes_survey_and_rejects_unknown_tags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("i.csv");
    std::fs::write(
        &path,
        "respondent_id,trip_ordinal,departure_epoch,departure_local,label,age@SURVEY,licence@SURVEY,Duration_CAR@CAR_LOS\n\
         R1,1,100,2023-05-08 08:00:00,car,30,true,600\n\
         R2,1,200,2023-05-08 09:00:00,pt,,false,-1\n",
    )
    .unwrap();
    let ds = read_instances(&path, -1.0).unwrap();
    assert_eq!(names(&ds), vec!["age_SURVEY", "licence_SURVEYfalse", "licence_SURVEYtrue", "Duration_CAR"]);
    assert_eq!(ds.x, vec![vec![30.0, 0.0, 1.0, 600.0], vec![-1.0, 1.0, 0.0, -1.0]]);
    assert_eq!(ds.classes, vec!["car".to_string(), "pt".to_string()]);
    std::fs::write(&path, "respondent_id,trip_ordinal,departure_epoch,departure_local,label,x@MYSTERY\nR1,1,100,2023-05-08 08:00:00,car,1\n").unwrap();
    assert!(matches!(read_instances(&path, -1.0), Err(HarnessError::Config(_))));
}

/// Labels follow a transit duration column; the survey column is noise.
fn constructed_signal(n_resp: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols = [("age_SURVEY", FeatureTag::Survey), ("Duration_CAR", FeatureTag::CarLos), ("minDuration_TRANSIT", FeatureTag::PlanPtLos)];
    let mut rows = Vec::new();
    for r in 0..n_resp {
        let day = (r * 20 / n_resp) as i64;
        let age = rng.gen_range(18.0..80.0);
        for _ in 0..rng.gen_range(1..4) {
            let car = rng.gen_range(300.0..3000.0);
            let pt: f64 = rng.gen_range(300.0..3000.0);
            let label = if pt < 900.0 { 0 } else if pt < 1800.0 { 1 } else { 2 };
            rows.push((format!("R{r}"), day, vec![age, car, pt], label));
        }
    }
    dataset(&cols, &rows, 3)
}

fn learners() -> Vec<Box<dyn Learner>> {
    vec![Box::new(NaiveBayesLearner::default()), Box::new(DecisionTreeLearner::default())]
}

#[test]
fn run_scenario_bookkeeping_and_determinism() {
    let ds = constructed_signal(120, 3);
    let settings = RunSettings { k: 10, alpha: 0.2, seed: 9, permutation_repeats: 2, grid_points: Some(1) };
    let nb: Vec<Box<dyn Learner>> = vec![Box::new(NaiveBayesLearner::default())];
    let report = run_scenario(&ds, &Scenario::named("S_P_LOS").unwrap(), &nb, &settings).unwrap();
    assert_eq!(report.folds.len(), 10);
    assert_eq!(report.grid.len(), 1);
    let mean = report.folds.iter().map(|f| f.kappa).sum::<f64>() / 10.0;
    assert!((report.grid[0].mean_kappa - mean).abs() < 1e-12);
    assert_eq!(report.train_instances + report.final_instances, ds.len());
    assert_eq!(report, run_scenario(&ds, &Scenario::named("S_P_LOS").unwrap(), &nb, &settings).unwrap());
}

#[test]
fn transit_signal_beats_survey_only() {
    let ds = constructed_signal(150, 5);
    let settings = RunSettings { k: 10, alpha: 0.2, seed: 1, permutation_repeats: 1, grid_points: Some(4) };
    let only = run_scenario(&ds, &Scenario::named("S_ONLY").unwrap(), &learners(), &settings).unwrap();
    let plos = run_scenario(&ds, &Scenario::named("S_P_LOS").unwrap(), &learners(), &settings).unwrap();
    assert!(plos.final_scores.accuracy >= only.final_scores.accuracy + 0.10, "{} vs {}", plos.final_scores.accuracy, only.final_scores.accuracy);
    for g in &plos.grid {
        let folds: Vec<f64> = plos.folds.iter().filter(|f| f.method == g.method && f.params == g.params).map(|f| f.kappa).collect();
        assert_eq!(folds.len(), 10);
        assert!((g.mean_kappa - folds.iter().sum::<f64>() / 10.0).abs() < 1e-12);
    }
    assert_eq!(plos.importance[0].feature, "minDuration_TRANSIT");
}

#[allow(dead_code)]
fn assert_model_object_safe(_: &dyn Model) {}
