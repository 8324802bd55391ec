mod common;

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use modefusion::clock::ServiceClock;
use modefusion::gtfs::parse_gtfs;
use modefusion::synth::{generate_city, CitySpec, SynthError};
use modefusion::vehicle_flow::{ingest_traces, read_traces};

fn tree_digest(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn fixed_seed_reproduces_every_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = common::small_city_spec(3);
    let a = generate_city(&spec, dir.path().join("a")).unwrap();
    let b = generate_city(&spec, dir.path().join("b")).unwrap();
    assert_eq!(a, b);
    let (da, db) = (tree_digest(&dir.path().join("a")), tree_digest(&dir.path().join("b")));
    assert!(da.contains_key("traces.csv") && da.contains_key("survey.csv") && da.contains_key("labels.csv"));
    assert_eq!(da.keys().collect::<Vec<_>>(), db.keys().collect::<Vec<_>>());
    for (k, v) in &da {
        assert!(db[k] == *v, "{k} differs");
    }
    let c = generate_city(&common::small_city_spec(4), dir.path().join("c")).unwrap();
    assert_ne!(tree_digest(&dir.path().join("c"))["survey.csv"], da["survey.csv"]);
    assert_eq!(c.stops, a.stops);
}

#[test]
fn invalid_specs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut bad = Vec::new();
    let mut s = CitySpec::default();
    s.grid.rows = 2;
    bad.push(s);
    let mut s = CitySpec::default();
    s.traces.cadence_s = 0;
    bad.push(s);
    let mut s = CitySpec::default();
    s.survey.noise = 1.5;
    bad.push(s);
    let mut s = CitySpec::default();
    s.transit.first_departure_h = 21;
    bad.push(s);
    for s in bad {
        assert!(matches!(generate_city(&s, dir.path()), Err(SynthError::Config(_))), "{s:?}");
    }
    assert!(matches!(CitySpec::from_toml("seed = 1\ncolour = \"red\"\n"), Err(SynthError::Config(_))));
    assert_eq!(CitySpec::from_toml("[survey]\nrespondents = 7\n").unwrap().survey.respondents, 7);
}

#[test]
fn survey_and_trace_calendars() {
    let spec = common::small_city_spec(1);
    let survey = spec.survey_dates();
    assert_eq!(survey.len(), 5);
    assert_eq!(survey[0], NaiveDate::from_ymd_opt(2023, 5, 8).unwrap());
    let trace = spec.trace_dates();
    let d = |day| NaiveDate::from_ymd_opt(2023, 5, day).unwrap();
    assert_eq!(trace, vec![d(4), d(9), d(10), d(11)]);
}

#[test]
fn injected_delays_are_recovered_from_traces() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = common::small_city_spec(5);
    spec.survey.weekdays = 2;
    let report = generate_city(&spec, dir.path()).unwrap();
    let (_, rows) = common::read_csv(&dir.path().join("injected_delays.csv"));
    let injected: BTreeMap<(String, String), f64> = rows.iter().map(|r| ((r[0].clone(), r[1].clone()), r[4].parse().unwrap())).collect();
    let mean_injected = injected.values().sum::<f64>() / injected.len() as f64;
    assert!((mean_injected - report.mean_injected_delay_s).abs() < 1e-9);

    let clock = ServiceClock::new(spec.utc_offset_s);
    let planned = parse_gtfs(dir.path().join("gtfs")).unwrap();
    let (records, _) = read_traces(dir.path().join("traces.csv")).unwrap();
    let (_, visits, stats) = ingest_traces(records, &planned, &clock);
    assert!(stats.unmatched * 50 <= stats.records, "{stats:?}");
    let mut per_trip: BTreeMap<(String, String), Vec<i64>> = BTreeMap::new();
    for v in &visits {
        let date = clock.service_date_of(v.epoch, 3 * 3600).to_string();
        per_trip.entry((date, v.trip_id.clone())).or_default().push(v.delay_s);
    }
    assert!(per_trip.len() * 100 >= injected.len() * 95, "{} of {} trips observed", per_trip.len(), injected.len());
    let mut close = 0;
    for (key, delays) in &per_trip {
        let mut d = delays.clone();
        d.sort();
        if (d[d.len() / 2] as f64 - injected[key]).abs() <= 10.0 {
            close += 1;
        }
    }
    assert!(close * 100 >= per_trip.len() * 95, "{close} of {} trips within 10 s", per_trip.len());
    let recovered = visits.iter().map(|v| v.delay_s as f64).sum::<f64>() / visits.len() as f64;
    assert!((115.0..=125.0).contains(&recovered), "mean recovered delay {recovered}");
}

fn field<'a>(header: &[String], row: &'a [String], name: &str) -> &'a str {
    &row[header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))]
}

#[test]
fn noiseless_labels_follow_the_choice_rule() {
    let dir = tempfile::tempdir().unwrap();
    let spec = common::small_city_spec(8);
    let (cfg, report) = common::prepared_city(dir.path(), &spec);
    let (_, labels) = common::read_csv(&dir.path().join("labels.csv"));
    assert!(labels.iter().all(|r| r[2] == r[3]));
    assert_eq!(labels.len(), report.survey_trips);
    assert!(report.label_counts.len() >= 3, "{:?}", report.label_counts);

    modefusion::fusion::run_fusion(&cfg).unwrap();
    let (h, rows) = common::read_csv(&cfg.paths.instances());
    assert_eq!(rows.len(), labels.len());
    for row in &rows {
        let num = |n: &str| field(&h, row, n).parse::<f64>().unwrap();
        let walk = num("Distance_WALK@WALKING_LOS");
        let car = num("Duration_CAR@CAR_LOS");
        let has_pt = num("hasTransit_TRANSIT@PLAN_PT_LOS") == 1.0;
        let pt = num("minDuration_TRANSIT@PLAN_PT_LOS");
        let car_ok = field(&h, row, "carAvailable@SURVEY") == "true" && car >= 0.0;
        let bike = field(&h, row, "bikeOwner@SURVEY") == "true";
        let expected = if (0.0..=1000.0).contains(&walk) {
            "walk"
        } else if has_pt && (!car_ok || car / pt >= 0.55) {
            "pt"
        } else if car_ok {
            "car"
        } else if bike && (0.0..=4000.0).contains(&walk) {
            "bike"
        } else if has_pt {
            "pt"
        } else {
            "walk"
        };
        assert_eq!(field(&h, row, "label"), expected, "{row:?}");
    }
}

#[test]
fn noise_flips_a_share_of_labels() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = common::small_city_spec(8);
    spec.survey.noise = 0.3;
    generate_city(&spec, dir.path()).unwrap();
    let (_, labels) = common::read_csv(&dir.path().join("labels.csv"));
    let flipped = labels.iter().filter(|r| r[2] != r[3]).count() as f64 / labels.len() as f64;
    assert!((0.15..=0.45).contains(&flipped), "{flipped}");
}
