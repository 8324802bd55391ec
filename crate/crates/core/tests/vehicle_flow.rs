mod common;

use common::*;
use modefusion::clock::Epoch;
use modefusion::geodesy::haversine_m;
use modefusion::gtfs::{build_real_timetable, observations_from_segments, observations_from_visits, parse_gtfs, write_real_gtfs};
use modefusion::synth::Halt;
use modefusion::vehicle_flow::{ingest_traces, query_experience, SegmentStore, VehicleTracker};

#[test]
fn injected_delays_are_recovered_at_every_stop() {
    let tt = corridor_timetable();
    for delta in [-120, 0, 60, 120, 300] {
        for phase in 0..5 {
            let records = corridor_trace(&tt, [delta; 3], &[], phase);
            let (_, visits, stats) = ingest_traces(records, &tt, &corridor_clock());
            assert!(stats.matched > 0);
            assert_eq!(visits.len(), 18, "delta {delta} phase {phase}");
            for v in &visits {
                assert!((v.delay_s - delta).abs() <= 5, "delta {delta} phase {phase}: {} at {} -> {}", v.trip_id, v.stop_id, v.delay_s);
            }
        }
    }
}

#[test]
fn per_trip_delays_and_matched_context() {
    let tt = corridor_timetable();
    let delays: [Epoch; 3] = [0, 120, -60];
    let records = corridor_trace(&tt, delays, &[], 2);
    let mut tracker = VehicleTracker::new(&tt, "10", "1", corridor_date(), &corridor_clock());
    let mut seen_delay = false;
    let mut done = false;
    for r in records {
        let m = match tracker.observe(r) {
            Ok(m) => m,
            Err(e) => {
                assert_eq!(e.reason, "after the last planned trip of the block");
                done = true;
                continue;
            }
        };
        assert!(!done, "matched a record after the block ended");
        assert!(["t1", "t2", "t3"].contains(&m.trip_id.as_str()));
        if let (Some(p), Some(n)) = (&m.previous_stop, &m.next_stop) {
            let trip = tt.trip(&m.trip_id).unwrap();
            let pi = trip.stop_times.iter().position(|s| &s.stop_id == p).unwrap();
            let ni = trip.stop_times.iter().position(|s| &s.stop_id == n).unwrap();
            assert!(pi < ni);
        }
        assert_eq!(m.destination_stop, tt.trip(&m.trip_id).unwrap().stop_times.last().unwrap().stop_id);
        if let (true, Some(d)) = (m.trip_id == "t2", m.delay_s) {
            assert!((d - 120).abs() <= 5);
            seen_delay = true;
        }
    }
    assert!(seen_delay);
    let track = tracker.finish();
    for v in &track.visits {
        let want = delays[["t1", "t2", "t3"].iter().position(|t| *t == v.trip_id).unwrap()];
        assert!((v.delay_s - want).abs() <= 5);
    }
}

#[test]
fn constant_speed_edges_average_ten_mps() {
    let tt = corridor_timetable();
    let (store, _, _) = ingest_traces(corridor_trace(&tt, [0; 3], &[], 3), &tt, &corridor_clock());
    assert_eq!(store.len(), 15);
    for s in store.iter() {
        assert!((s.avg_speed_mps - 10.0).abs() <= 0.5, "{} -> {}: {}", s.from_stop, s.to_stop, s.avg_speed_mps);
        assert!(s.departure_from < s.departure_to);
        assert_eq!(s.at_or_above, [0; 4]);
        assert_eq!(s.below, [0; 4]);
    }
}

#[test]
fn mid_edge_halt_is_a_long_stopping_event() {
    let tt = corridor_timetable();
    let halts = [Halt { after: 2, fraction: 0.5, duration_s: 60 }];
    // phase 0 puts samples on both ends of the halt
    let (store, _, _) = ingest_traces(corridor_trace(&tt, [0; 3], &halts, 0), &tt, &corridor_clock());
    let seg = store.iter().find(|s| s.trip_id == "t1" && s.from_stop == "C2").unwrap();
    assert_eq!(seg.at_or_above[1], 1, "{seg:?}");
    assert_eq!(seg.at_or_above[0] + seg.below[0], 1);
    for s in store.iter().filter(|s| !(s.trip_id == "t1" && s.from_stop == "C2")) {
        assert_eq!(s.at_or_above, [0; 4]);
    }
}

#[test]
fn consecutive_segments_share_a_stop() {
    let tt = corridor_timetable();
    let (store, _, _) = ingest_traces(corridor_trace(&tt, [30, 90, 0], &[], 4), &tt, &corridor_clock());
    let segs: Vec<_> = store.iter().collect();
    let mut by_trip = std::collections::BTreeMap::<&str, Vec<_>>::new();
    for s in &segs {
        by_trip.entry(s.trip_id.as_str()).or_default().push(*s);
    }
    for list in by_trip.values() {
        for w in list.windows(2) {
            assert_eq!(w[0].to_stop, w[1].from_stop);
            assert_eq!(w[0].departure_to, w[1].departure_from);
        }
    }
}

#[test]
fn replay_is_byte_identical() {
    let tt = corridor_timetable();
    let dir = tempfile::tempdir().unwrap();
    for run in ["a", "b"] {
        let (store, _, _) = ingest_traces(corridor_trace(&tt, [45, 0, 10], &[], 0), &tt, &corridor_clock());
        store.write(dir.path().join(run)).unwrap();
    }
    let read = |run: &str| std::fs::read(dir.path().join(run).join("2023-05-09").join("10.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    let reopened = SegmentStore::open(dir.path().join("a")).unwrap();
    let (store, _, _) = ingest_traces(corridor_trace(&tt, [45, 0, 10], &[], 0), &tt, &corridor_clock());
    assert_eq!(reopened.iter().collect::<Vec<_>>(), store.iter().collect::<Vec<_>>());
}

#[test]
fn real_timetable_uses_observations_and_drops_unrun_trips() {
    let tt = corridor_timetable();
    let (store, visits, _) = ingest_traces(corridor_trace(&tt, [60, 300, -120], &[], 2), &tt, &corridor_clock());
    let midnight = corridor_clock().midnight(corridor_date());
    let obs = observations_from_segments(store.iter());
    let (real, report) = build_real_timetable(&obs, &tt, corridor_date(), &corridor_clock()).unwrap();
    assert!(real.trip("t4").is_none());
    assert_eq!(report.kept_trips, 3);
    for v in &visits {
        let st = real.trip(&v.trip_id).unwrap().stop_times.iter().find(|s| s.stop_id == v.stop_id).unwrap();
        assert_eq!(st.time.departure as Epoch, v.epoch - midnight);
    }
    assert_eq!(observations_from_visits(&visits).len(), visits.len());
    let dir = tempfile::tempdir().unwrap();
    let out = write_real_gtfs(&real, dir.path()).unwrap();
    assert!(out.ends_with("real_gtfs/2023-05-09"));
    assert_eq!(parse_gtfs(&out).unwrap(), real);
}

#[test]
fn experience_over_ingested_segments() {
    let tt = corridor_timetable();
    let (store, _, _) = ingest_traces(corridor_trace(&tt, [0, 120, 0], &[], 2), &tt, &corridor_clock());
    let midnight = corridor_clock().midnight(corridor_date());
    let agg = query_experience(
        &store,
        &[("C4".to_string(), "C3".to_string())],
        &["10".to_string()],
        (midnight, midnight + 86_400),
        -1.0,
    )
    .unwrap();
    assert!(agg.has_experience);
    assert_eq!(agg.segments, 1);
    assert!((agg.avg_delay_s - 120.0).abs() <= 5.0);
    let stops: Vec<_> = tt.stops.iter().map(|s| s.pos).collect();
    assert!((haversine_m(stops[0], stops[1]) - CORRIDOR_SPACING_M).abs() < 0.5);
}
