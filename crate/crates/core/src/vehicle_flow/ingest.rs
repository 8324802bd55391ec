use std::collections::BTreeMap;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::segments::extract_edge_segments;
use super::store::SegmentStore;
use super::trace::{dedupe, VehicleLocation};
use super::tracker::{StopVisit, VehicleTracker};
use crate::clock::{ServiceClock, SERVICE_DAY_CUTOFF_S};
use crate::gtfs::Timetable;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub records: usize,
    pub duplicates: usize,
    pub matched: usize,
    pub unmatched: usize,
    pub vehicle_days: usize,
    pub stop_visits: usize,
    pub segments: usize,
}

/// Replays raw records: deduplicates, splits into vehicle service days,
/// matches each against the planned timetable and extracts edge segments.
/// Vehicle days are processed in parallel; output order is deterministic.
pub fn ingest_traces(records: Vec<VehicleLocation>, planned: &Timetable, clock: &ServiceClock) -> (SegmentStore, Vec<StopVisit>, IngestStats) {
    let mut stats = IngestStats { records: records.len(), ..Default::default() };
    let (records, duplicates) = dedupe(records);
    stats.duplicates = duplicates;

    let mut groups: BTreeMap<(String, String, NaiveDate), Vec<VehicleLocation>> = BTreeMap::new();
    for r in records {
        let date = clock.service_date_of(r.epoch, SERVICE_DAY_CUTOFF_S);
        groups.entry((r.line.clone(), r.brigade.clone(), date)).or_default().push(r);
    }
    stats.vehicle_days = groups.len();

    let results: Vec<_> = groups
        .into_par_iter()
        .map(|((line, brigade, date), recs)| {
            let mut tracker = VehicleTracker::new(planned, &line, &brigade, date, clock);
            let (mut matched, mut unmatched) = (0, 0);
            for r in recs {
                match tracker.observe(r) {
                    Ok(_) => matched += 1,
                    Err(_) => unmatched += 1,
                }
            }
            let track = tracker.finish();
            let segments = extract_edge_segments(&track);
            (segments, track.visits, matched, unmatched)
        })
        .collect();

    let mut all_segments = Vec::new();
    let mut visits = Vec::new();
    for (segments, v, matched, unmatched) in results {
        stats.matched += matched;
        stats.unmatched += unmatched;
        stats.stop_visits += v.len();
        all_segments.extend(segments);
        visits.extend(v);
    }
    stats.segments = all_segments.len();
    (SegmentStore::from_segments(all_segments), visits, stats)
}
