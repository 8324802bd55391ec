use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::events::{count_stopping_events, speed_series, DEFAULT_STOP_SPEED_MPS, STOP_DURATION_THRESHOLDS};
use super::tracker::VehicleDayTrack;
use crate::clock::Epoch;
use crate::geodesy::{haversine_m, LatLon};

/// One vehicle's traversal between two consecutive stops of a trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSegment {
    pub service_date: NaiveDate,
    pub vehicle_id: String,
    pub line: String,
    pub trip_id: String,
    pub from_stop: String,
    pub to_stop: String,
    pub from_seq: u32,
    pub to_seq: u32,
    pub departure_from: Epoch,
    /// Departure from the second stop, or its arrival when it ends the trip.
    pub departure_to: Epoch,
    pub delay_from: Epoch,
    pub delay_to: Epoch,
    pub avg_speed_mps: f64,
    /// Stopping episodes shorter than each of [`STOP_DURATION_THRESHOLDS`].
    pub below: [u32; 4],
    /// Stopping episodes lasting at least each of [`STOP_DURATION_THRESHOLDS`].
    pub at_or_above: [u32; 4],
}

/// Builds one segment per pair of consecutive stops of a trip that were both visited.
pub fn extract_edge_segments(track: &VehicleDayTrack) -> Vec<EdgeSegment> {
    let mut out = Vec::new();
    for pair in track.visits.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.trip_id != b.trip_id || b.stop_pos != a.stop_pos + 1 || b.epoch <= a.epoch {
            continue;
        }
        let inner = &track.samples[(a.last_sample + 1).min(b.first_sample)..b.first_sample];
        let mut path: Vec<LatLon> = Vec::with_capacity(inner.len() + 2);
        path.push(a.stop_location);
        path.extend(inner.iter().map(|s| s.pos));
        path.push(b.stop_location);
        let length: f64 = path.windows(2).map(|w| haversine_m(w[0], w[1])).sum();
        let elapsed = (b.arrival - a.epoch).max(1) as f64;

        let moving: Vec<(Epoch, LatLon)> =
            track.samples[a.last_sample..=b.first_sample.max(a.last_sample)].iter().map(|s| (s.epoch, s.pos)).collect();
        let counts = count_stopping_events(&speed_series(&moving), DEFAULT_STOP_SPEED_MPS, &STOP_DURATION_THRESHOLDS);
        let mut below = [0; 4];
        let mut at_or_above = [0; 4];
        for (i, c) in counts.iter().enumerate() {
            below[i] = c.below;
            at_or_above[i] = c.at_or_above;
        }

        out.push(EdgeSegment {
            service_date: track.date,
            vehicle_id: track.vehicle_id(),
            line: track.line.clone(),
            trip_id: a.trip_id.clone(),
            from_stop: a.stop_id.clone(),
            to_stop: b.stop_id.clone(),
            from_seq: a.sequence,
            to_seq: b.sequence,
            departure_from: a.epoch,
            departure_to: b.epoch,
            delay_from: a.delay_s,
            delay_to: b.delay_s,
            avg_speed_mps: length / elapsed,
            below,
            at_or_above,
        });
    }
    out
}
