mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use chrono::{Duration, NaiveDate};
use common::*;
use modefusion::car_model::{duration_in_traffic, MatrixKind, ZoneMatrices, ZoneSet};
use modefusion::clock::{Epoch, ServiceClock};
use modefusion::config::RunConfig;
use modefusion::fusion::{run_fusion, FeatureTag};
use modefusion::geodesy::LatLon;
use modefusion::gtfs::{build_real_timetable, observations_from_segments, parse_gtfs, write_gtfs, write_real_gtfs};
use modefusion::ml_harness::{
    grouped_kfold, permutation_importance, scores_from_confusion, split_holdout, Binned, Column, Dataset, Forest, ForestParams, MaxFeatures, Tree,
    TreeParams, MAX_BINS,
};
use modefusion::pipeline::{run_build_real, run_evaluate, run_ingest};
use modefusion::router::{ModeChoiceWindow, TransitNetwork, TransitParams};
use modefusion::synth::{generate_city, random_transit_city, CitySpec, GridSpec};
use modefusion::vehicle_flow::{count_stopping_events, ingest_traces, DEFAULT_STOP_SPEED_MPS, STOP_DURATION_THRESHOLDS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn network_city(seed: u64) -> (GridSpec, TransitNetwork) {
    let (spec, graph, tt) = random_transit_city(seed, 50, 3);
    let date = NaiveDate::from_ymd_opt(2023, 5, 9).unwrap();
    (spec, TransitNetwork::build(&tt, Arc::new(graph), date, &ServiceClock::new(7200), TransitParams::default()))
}

fn random_point(spec: &GridSpec, rng: &mut ChaCha8Rng) -> LatLon {
    spec.point(rng.gen_range(0.0..spec.width_m()), rng.gen_range(0.0..spec.height_m()))
}

fn router_matches_oracle() -> Outcome {
    let start = Instant::now();
    let (spec, net) = network_city(11);
    let window = ModeChoiceWindow::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut mismatches, mut reachable) = (0, 0);
    for _ in 0..100 {
        let o = random_point(&spec, &mut rng);
        let d = random_point(&spec, &mut rng);
        let t = rng.gen_range(6 * 3600..9 * 3600 + 1800);
        let got = net.plan_connections(o, d, net.midnight() + t, window, 5).first().map(|c| c.arrival - net.midnight());
        let want = time_expanded_earliest_arrival(&net, o, d, t, window);
        mismatches += (got != want) as usize;
        reachable += want.is_some() as usize;
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        mismatches == 0 && reachable > 0 && secs < 10.0,
        format!("100 queries on 50 stops, {mismatches} mismatches (exact), {reachable} reachable, {secs:.2} s (< 10 s)"),
    )
}

fn window_contract() -> Outcome {
    let (spec, net) = network_city(3);
    let window = ModeChoiceWindow::new(300, 600).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut outside, mut total) = (0, 0);
    for _ in 0..1000 {
        let o = random_point(&spec, &mut rng);
        let d = random_point(&spec, &mut rng);
        let t = net.midnight() + rng.gen_range(6 * 3600..9 * 3600 + 1800);
        for c in net.plan_connections(o, d, t, window, usize::MAX) {
            total += 1;
            outside += (c.departure < t - 300 || c.departure > t + 600) as usize;
        }
    }
    check(outside == 0 && total > 0, format!("1000 queries, {total} connections, {outside} departing outside [t-300, t+600]"))
}

fn traffic_formula() -> Outcome {
    let square = |x0: f64| vec![vec![LatLon::new(0.0, x0), LatLon::new(0.0, x0 + 1.0), LatLon::new(1.0, x0 + 1.0), LatLon::new(1.0, x0)]];
    let zones = ZoneSet::new(vec![("1".into(), square(0.0)), ("2".into(), square(1.0))]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (mut worst, mut equal_exact) = (0.0f64, true);
    for _ in 0..1000 {
        let f = rng.gen_range(1.0..7200.0);
        let tr: Vec<f64> = (0..4).map(|_| rng.gen_range(30.0..5000.0)).collect();
        let ntr: Vec<f64> = (0..4).map(|_| rng.gen_range(30.0..5000.0)).collect();
        let hour = rng.gen_range(0..24u8);
        let (o, d) = (rng.gen_range(0..2usize), rng.gen_range(0..2usize));
        let (oz, dz) = ((o + 1).to_string(), (d + 1).to_string());
        let mut m = ZoneMatrices::new(&zones);
        m.insert(MatrixKind::TtbcTraffic, hour, tr.clone()).unwrap();
        m.insert(MatrixKind::TtbcFreeflow, hour, ntr.clone()).unwrap();
        let got = duration_in_traffic(f, &oz, &dz, hour, &zones, &m).unwrap();
        let want = f * tr[o * 2 + d] / ntr[o * 2 + d];
        worst = worst.max((got - want).abs() / want);
        let mut same = ZoneMatrices::new(&zones);
        same.insert(MatrixKind::TtbcTraffic, hour, tr.clone()).unwrap();
        same.insert(MatrixKind::TtbcFreeflow, hour, tr).unwrap();
        equal_exact &= duration_in_traffic(f, &oz, &dz, hour, &zones, &same).unwrap() == f;
    }
    check(worst <= 1e-9 && equal_exact, format!("1000 draws, max relative error {worst:.2e} (<= 1e-9), TR=NTR returns F exactly: {equal_exact}"))
}

/// Run-length oracle: every index range that is all-slow and cannot be extended.
fn brute_force_events(series: &[(Epoch, f64)], threshold: f64, cut: i64) -> (u32, u32) {
    let slow: Vec<bool> = series.iter().map(|s| s.1 < threshold).collect();
    let (mut below, mut above) = (0, 0);
    for i in 0..slow.len() {
        for j in i..slow.len() {
            let all = slow[i..=j].iter().all(|&b| b);
            let maximal = (i == 0 || !slow[i - 1]) && (j + 1 == slow.len() || !slow[j + 1]);
            if all && maximal {
                if series[j].0 - series[i].0 < cut {
                    below += 1;
                } else {
                    above += 1;
                }
            }
        }
    }
    (below, above)
}

fn stop_event_counters() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let kmh = [0.0, 1.0, 4.9, 4.999, 5.0, 5.001, 12.0, 30.0, 50.0];
    let mut mismatched = 0;
    for _ in 0..10_000 {
        let len = rng.gen_range(0..90);
        let t0: Epoch = rng.gen_range(1_683_000_000..1_684_000_000);
        let mut slow = rng.gen_bool(0.5);
        let series: Vec<(Epoch, f64)> = (0..len)
            .map(|i| {
                if rng.gen_bool(0.15) {
                    slow = !slow;
                }
                let v = if slow { kmh[rng.gen_range(0..4)] } else { kmh[rng.gen_range(4..kmh.len())] };
                (t0 + 5 * i as Epoch, v / 3.6)
            })
            .collect();
        let got = count_stopping_events(&series, DEFAULT_STOP_SPEED_MPS, &STOP_DURATION_THRESHOLDS);
        let ok = got.len() == 4
            && STOP_DURATION_THRESHOLDS.iter().zip(&got).all(|(&cut, c)| {
                let (b, a) = brute_force_events(&series, 5.0 / 3.6, cut);
                c.threshold_s == cut && c.below == b && c.at_or_above == a
            });
        mismatched += !ok as usize;
    }
    check(mismatched == 0, format!("10000 series at 5 s cadence, 8 counters each, {mismatched} series differ from the run-length oracle"))
}

fn delay_recovery() -> Outcome {
    let tt = corridor_timetable();
    let clock = corridor_clock();
    let mut worst = 0;
    let mut missing = 0;
    for delta in [-120, 0, 60, 300] {
        for phase in 0..5 {
            let (_, visits, _) = ingest_traces(corridor_trace(&tt, [delta; 3], &[], phase), &tt, &clock);
            missing += 18usize.saturating_sub(visits.len());
            for v in &visits {
                worst = worst.max((v.delay_s - delta).abs());
            }
        }
    }
    let (store, _, _) = ingest_traces(corridor_trace(&tt, [60, 300, -120], &[], 2), &tt, &clock);
    let obs = observations_from_segments(store.iter());
    let (real, report) = build_real_timetable(&obs, &tt, corridor_date(), &clock).unwrap();
    let unrun_absent = real.trip("t4").is_none() && report.kept_trips == 3;
    check(
        worst <= 5 && missing == 0 && unrun_absent,
        format!("delays -120/0/60/300 over 5 phases, max error {worst} s (<= 5 s), {missing} stops missed, unobserved trip dropped: {unrun_absent}"),
    )
}

fn gtfs_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut failures = 0;
    for i in 0..100 {
        let tt = random_feed(1000 + i, rng.gen_range(2..40), rng.gen_range(1..60), rng.gen_bool(0.5));
        let dir = tempfile::tempdir().unwrap();
        write_gtfs(&tt, dir.path()).unwrap();
        failures += (parse_gtfs(dir.path()).ok().as_ref() != Some(&tt)) as usize;
    }
    let tt = corridor_timetable();
    let (store, _, _) = ingest_traces(corridor_trace(&tt, [30, 90, 0], &[], 1), &tt, &corridor_clock());
    let (real, _) = build_real_timetable(&observations_from_segments(store.iter()), &tt, corridor_date(), &corridor_clock()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = write_real_gtfs(&real, dir.path()).unwrap();
    let real_ok = parse_gtfs(&out).ok() == Some(real);
    check(failures == 0 && real_ok, format!("100 random feeds, {failures} not restored by parse(write(feed)), real feed re-parses: {real_ok}"))
}

fn fusion_contract() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, _) = prepared_city(dir.path(), &small_city_spec(21));
    run_fusion(&cfg).unwrap();
    let first = std::fs::read(cfg.paths.instances()).unwrap();
    run_fusion(&cfg).unwrap();
    let identical = std::fs::read(cfg.paths.instances()).unwrap() == first;
    let (header, rows) = read_csv(&cfg.paths.instances());
    let dep = header.iter().position(|h| h == "departure_epoch").unwrap();
    let times: Vec<i64> = rows.iter().map(|r| r[dep].parse().unwrap()).collect();
    let ordered = times.windows(2).all(|w| w[0] <= w[1]);
    let col = |name: &str| header.iter().position(|h| h.split('@').next() == Some(name)).unwrap();
    let diffs: Vec<usize> = (0..header.len()).filter(|&i| header[i].ends_with("@DIFF")).collect();
    let mut wrong = 0;
    for row in &rows {
        for &i in &diffs {
            let (a, b, ratio) = decode_diff(header[i].split('@').next().unwrap());
            let want = diff_oracle(row[col(&a)].parse().unwrap(), row[col(&b)].parse().unwrap(), ratio, -1.0);
            wrong += (row[i].parse::<f64>().unwrap().to_bits() != want.to_bits()) as usize;
        }
    }
    check(
        identical && ordered && wrong == 0 && !diffs.is_empty(),
        format!("{} instances, rerun byte-identical: {identical}, t_D non-decreasing: {ordered}, {wrong} of {} DIFF cells differ", rows.len(), rows.len() * diffs.len()),
    )
}

fn day_dataset(counts: &[usize]) -> Dataset {
    let start = NaiveDate::from_ymd_opt(2023, 5, 1).unwrap();
    let days: Vec<i64> = counts.iter().enumerate().flat_map(|(d, &n)| std::iter::repeat_n(d as i64, n)).collect();
    Dataset {
        columns: vec![Column { name: "f".into(), tag: FeatureTag::CarLos }],
        x: days.iter().map(|_| vec![0.0]).collect(),
        y: (0..days.len()).map(|i| i % 2).collect(),
        classes: vec!["a".into(), "b".into()],
        groups: (0..days.len()).map(|i| format!("R{i}")).collect(),
        ordinals: vec![1; days.len()],
        departure: days.iter().enumerate().map(|(i, d)| d * 86_400 + i as i64).collect(),
        day: days.iter().map(|&d| start + Duration::days(d)).collect(),
    }
}

fn evaluation_protocol() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut split_groups = 0;
    for _ in 0..50 {
        let groups: Vec<String> = (0..rng.gen_range(30..200)).flat_map(|g| std::iter::repeat_n(format!("P{g}"), rng.gen_range(1..6))).collect();
        let folds = grouped_kfold(&groups, 10, rng.gen()).unwrap();
        let mut fold_of: BTreeMap<&str, usize> = BTreeMap::new();
        for (g, &f) in groups.iter().zip(&folds) {
            split_groups += (*fold_of.entry(g).or_insert(f) != f) as usize;
        }
    }
    let mut bad_holdout = 0;
    for _ in 0..200 {
        let counts: Vec<usize> = (0..rng.gen_range(2..20)).map(|_| rng.gen_range(1..40)).collect();
        let need = (0.2 * counts.iter().sum::<usize>() as f64).ceil() as usize;
        let want = (1..counts.len()).map(|s| counts[counts.len() - s..].iter().sum::<usize>()).find(|&n| n >= need);
        let got = split_holdout(&day_dataset(&counts), 0.2).ok().map(|(_, h)| h.len());
        bad_holdout += (got != want) as usize;
    }
    let kappa = scores_from_confusion(&[vec![50, 10], vec![5, 35]]).unwrap().kappa;
    check(
        split_groups == 0 && bad_holdout == 0 && (kappa - 0.6939).abs() <= 5e-4,
        format!("K=10 split {split_groups} respondents over 50 draws, {bad_holdout}/200 holdouts not the minimal day suffix, kappa {kappa:.4} (0.6939 +/- 5e-4)"),
    )
}

fn constructed_signal() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let city = dir.path().join("city");
    generate_city(&CitySpec::default(), &city).unwrap();
    let names = modefusion::ml_harness::SCENARIO_NAMES.map(|s| format!("\"{s}\"")).join(",");
    let cfg = RunConfig::load(city.join("config.toml"), &[format!("evaluation.scenarios=[{names}]")]).unwrap();
    run_ingest(&cfg, &city.join("traces.csv")).unwrap();
    run_build_real(&cfg, &[]).unwrap();
    run_fusion(&cfg).unwrap();
    let report = run_evaluate(&cfg, None).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let acc = |name: &str| report.scenarios.iter().find(|s| s.scenario == name).map(|s| s.final_scores.accuracy).unwrap();
    let (only, plos, all) = (acc("S_ONLY"), acc("S_P_LOS"), acc("S_ALL"));
    check(
        plos - only >= 0.10 && all >= only && secs < 300.0,
        format!(
            "{} instances, {} scenarios, holdout accuracy S_ONLY {only:.3}, S_P_LOS {plos:.3} (gain >= 0.10), S_ALL {all:.3} (>= S_ONLY), {secs:.1} s (< 300 s)",
            report.instances,
            report.scenarios.len()
        ),
    )
}

fn importance_sanity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let y: Vec<usize> = (0..400).map(|_| rng.gen_range(0..3)).collect();
    let x: Vec<Vec<f64>> = y.iter().map(|&c| vec![rng.gen_range(0.0..1.0), c as f64, rng.gen_range(0.0..1.0)]).collect();
    let names: Vec<String> = ["noise_a", "label_copy", "noise_b"].map(String::from).to_vec();
    let forest = Forest::fit(&x, &y, 3, ForestParams { trees: 30, max_features: MaxFeatures::Sqrt, max_depth: None, bootstrap: true }, 3);
    let ranked = permutation_importance(&forest, &x, &y, 3, &names, 3, 1).unwrap();
    let copy_first = ranked[0].feature == "label_copy";
    let stump = Tree::fit(&Binned::new(&x, MAX_BINS), &y, &vec![1.0; y.len()], 3, TreeParams { max_depth: Some(1), min_leaf: 1, max_features: MaxFeatures::All }, 0);
    let used = stump.used_features();
    let stump_imp = permutation_importance(&stump, &x, &y, 3, &names, 3, 1).unwrap();
    let unused_zero = stump_imp.iter().filter(|i| !used.contains(&names.iter().position(|n| *n == i.feature).unwrap())).all(|i| i.mean_kappa_drop == 0.0);
    check(copy_first && unused_zero && used.len() == 1, format!("label copy ranked first: {copy_first}, features unused by a depth-1 tree score exactly 0: {unused_zero}"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("router earliest arrival", router_matches_oracle),
        ("mode-choice window", window_contract),
        ("traffic duration", traffic_formula),
        ("stopping events", stop_event_counters),
        ("delay recovery", delay_recovery),
        ("gtfs round trip", gtfs_round_trip),
        ("fusion output", fusion_contract),
        ("evaluation protocol", evaluation_protocol),
        ("constructed signal", constructed_signal),
        ("permutation importance", importance_sanity),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {:>2} {name}: {detail}", i + 1)
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
