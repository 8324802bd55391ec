use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::trace::VehicleLocation;
use crate::clock::{Epoch, ServiceClock};
use crate::geodesy::{haversine_m, LatLon};
use crate::gtfs::{Timetable, TransitTrip};

pub const GEOFENCE_RADIUS_M: f64 = 50.0;

/// How long past its planned end a trip may still absorb records.
const TRIP_OVERRUN_S: Epoch = 1800;
/// Stops that may be skipped when a pass falls between two samples.
const LOOKAHEAD: usize = 3;
/// Below this exit/entry speed no sub-sample correction is applied.
const MIN_CORRECTION_SPEED: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("record of {vehicle_id} at {epoch} cannot be matched: {reason}")]
pub struct UnmatchedRecord {
    pub vehicle_id: String,
    pub epoch: Epoch,
    pub reason: &'static str,
}

/// A location record enriched with its trip context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedLocation {
    pub location: VehicleLocation,
    pub trip_id: String,
    pub previous_stop: Option<String>,
    pub next_stop: Option<String>,
    /// Terminal stop of the matched trip.
    pub destination_stop: String,
    /// Delay at the most recently departed stop, if any.
    pub delay_s: Option<Epoch>,
}

/// A confirmed stop visit. `epoch` is the departure, or the arrival for a trip's terminal stop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopVisit {
    pub trip_id: String,
    pub stop_id: String,
    pub stop_pos: usize,
    pub sequence: u32,
    pub stop_location: LatLon,
    pub epoch: Epoch,
    /// Estimated arrival at the stop; equals `epoch` at a terminal.
    pub arrival: Epoch,
    pub planned_epoch: Epoch,
    pub delay_s: Epoch,
    pub terminal: bool,
    /// Indices into the track's samples.
    pub first_sample: usize,
    pub last_sample: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleDayTrack {
    pub line: String,
    pub brigade: String,
    pub date: NaiveDate,
    pub samples: Vec<VehicleLocation>,
    pub visits: Vec<StopVisit>,
}

impl VehicleDayTrack {
    pub fn vehicle_id(&self) -> String {
        format!("{}/{}", self.line, self.brigade)
    }
}

#[derive(Debug, Clone)]
struct OpenFence {
    pos: usize,
    arrival: Epoch,
    first: usize,
    last: usize,
}

/// Per-vehicle, per-service-day matching state.
///
/// Trips of the vehicle's block are consumed in order of planned departure;
/// stops are visited in sequence order. A visit is confirmed when the vehicle
/// leaves the stop geofence, except at a trip's terminal stop, which is
/// confirmed on entry.
pub struct VehicleTracker<'a> {
    line: String,
    brigade: String,
    date: NaiveDate,
    midnight: Epoch,
    trips: Vec<&'a TransitTrip>,
    stop_locations: Vec<Vec<LatLon>>,
    current: usize,
    next_pos: usize,
    open: Option<OpenFence>,
    samples: Vec<VehicleLocation>,
    visits: Vec<StopVisit>,
}

impl<'a> VehicleTracker<'a> {
    pub fn new(planned: &'a Timetable, line: &str, brigade: &str, date: NaiveDate, clock: &ServiceClock) -> Self {
        let mut trips: Vec<&TransitTrip> = planned
            .trips_on(date)
            .filter(|t| {
                let r = planned.route_of(t);
                (r.short_name == line || r.id == line) && t.block_id.as_deref() == Some(brigade) && t.stop_times.len() >= 2
            })
            .collect();
        trips.sort_by_key(|t| (t.first_departure(), t.id.clone()));
        let stop_locations = trips
            .iter()
            .map(|t| t.stop_times.iter().map(|st| planned.stop(&st.stop_id).expect("validated").pos).collect())
            .collect();
        Self {
            line: line.to_string(),
            brigade: brigade.to_string(),
            date,
            midnight: clock.midnight(date),
            trips,
            stop_locations,
            current: 0,
            next_pos: 0,
            open: None,
            samples: Vec::new(),
            visits: Vec::new(),
        }
    }

    pub fn has_trips(&self) -> bool {
        !self.trips.is_empty()
    }

    fn unmatched(&self, epoch: Epoch, reason: &'static str) -> UnmatchedRecord {
        UnmatchedRecord { vehicle_id: format!("{}/{}", self.line, self.brigade), epoch, reason }
    }

    fn in_fence(&self, pos: usize, p: LatLon) -> bool {
        haversine_m(self.stop_locations[self.current][pos], p) <= GEOFENCE_RADIUS_M
    }

    fn planned_end(&self, trip: usize) -> Epoch {
        self.midnight + self.trips[trip].last_arrival().unwrap_or(0) as Epoch
    }

    fn last_visit_epoch(&self) -> Option<Epoch> {
        self.visits.last().map(|v| v.epoch)
    }

    fn push_visit(&mut self, pos: usize, epoch: Epoch, arrival: Epoch, terminal: bool, first: usize, last: usize) {
        let trip = self.trips[self.current];
        let st = &trip.stop_times[pos];
        let planned_secs = if terminal { st.time.arrival } else { st.time.departure };
        let planned_epoch = self.midnight + planned_secs as Epoch;
        let epoch = match self.last_visit_epoch() {
            Some(prev) if epoch <= prev => prev + 1,
            _ => epoch,
        };
        self.visits.push(StopVisit {
            trip_id: trip.id.clone(),
            stop_id: st.stop_id.clone(),
            stop_pos: pos,
            sequence: st.time.sequence,
            stop_location: self.stop_locations[self.current][pos],
            epoch,
            arrival: arrival.min(epoch),
            planned_epoch,
            delay_s: epoch - planned_epoch,
            terminal,
            first_sample: first,
            last_sample: last,
        });
    }

    /// Departure estimate: last in-fence sample, moved back by the time needed
    /// to cover its distance from the stop at the exit speed.
    fn close_fence(&mut self, fence: OpenFence, exit: usize) {
        let last = &self.samples[fence.last];
        let out = &self.samples[exit];
        let stop = self.stop_locations[self.current][fence.pos];
        let dt = (out.epoch - last.epoch) as f64;
        let v = if dt > 0.0 { haversine_m(last.pos, out.pos) / dt } else { 0.0 };
        let correction = if v > MIN_CORRECTION_SPEED { (haversine_m(last.pos, stop) / v).min(dt) } else { 0.0 };
        let epoch = last.epoch - correction.round() as Epoch;
        self.push_visit(fence.pos, epoch, fence.arrival, false, fence.first, fence.last);
        self.next_pos = fence.pos + 1;
    }

    /// Arrival estimate: first in-fence sample plus the time to cover its
    /// remaining distance to the stop at the entry speed.
    fn entry_estimate(&self, pos: usize, idx: usize) -> Epoch {
        let here = &self.samples[idx];
        let stop = self.stop_locations[self.current][pos];
        let mut epoch = here.epoch;
        if idx > 0 {
            let prev = &self.samples[idx - 1];
            let dt = (here.epoch - prev.epoch) as f64;
            let v = if dt > 0.0 { haversine_m(prev.pos, here.pos) / dt } else { 0.0 };
            if v > MIN_CORRECTION_SPEED {
                epoch += (haversine_m(here.pos, stop) / v).min(dt).round() as Epoch;
            }
        }
        epoch
    }

    fn arrive_terminal(&mut self, pos: usize, idx: usize) {
        let epoch = self.entry_estimate(pos, idx);
        self.push_visit(pos, epoch, epoch, true, idx, idx);
        self.current += 1;
        self.next_pos = 0;
    }

    fn try_open(&mut self, idx: usize) {
        if self.current >= self.trips.len() {
            return;
        }
        let p = self.samples[idx].pos;
        let n = self.stop_locations[self.current].len();
        let hit = (self.next_pos..(self.next_pos + LOOKAHEAD + 1).min(n)).find(|&pos| self.in_fence(pos, p));
        let Some(pos) = hit else { return };
        if pos + 1 == n {
            self.arrive_terminal(pos, idx);
            // a terminal is often also the first stop of the next trip
            if self.current < self.trips.len() && self.in_fence(0, p) {
                let arrival = self.samples[idx].epoch;
                self.open = Some(OpenFence { pos: 0, arrival, first: idx, last: idx });
            }
        } else {
            let arrival = self.entry_estimate(pos, idx);
            self.open = Some(OpenFence { pos, arrival, first: idx, last: idx });
        }
    }

    /// Consumes the next record of this vehicle (records must arrive in epoch order).
    pub fn observe(&mut self, record: VehicleLocation) -> Result<MatchedLocation, UnmatchedRecord> {
        if record.line != self.line || record.brigade != self.brigade {
            return Err(self.unmatched(record.epoch, "record belongs to another vehicle"));
        }
        if self.trips.is_empty() {
            return Err(self.unmatched(record.epoch, "no planned trips for line and brigade"));
        }
        let epoch = record.epoch;
        let idx = self.samples.len();
        self.samples.push(record);

        if self.open.is_none() {
            while self.current < self.trips.len() && self.planned_end(self.current) + TRIP_OVERRUN_S < epoch {
                self.current += 1;
                self.next_pos = 0;
            }
        }
        if self.current >= self.trips.len() {
            self.open = None;
            return Err(self.unmatched(epoch, "after the last planned trip of the block"));
        }

        match self.open.take() {
            Some(mut fence) if self.in_fence(fence.pos, self.samples[idx].pos) => {
                fence.last = idx;
                self.open = Some(fence);
            }
            Some(fence) => {
                self.close_fence(fence, idx);
                self.try_open(idx);
            }
            None => self.try_open(idx),
        }
        Ok(self.describe(idx))
    }

    fn describe(&self, idx: usize) -> MatchedLocation {
        let trip_idx = self.current.min(self.trips.len() - 1);
        let trip = self.trips[trip_idx];
        let n = trip.stop_times.len();
        let previous = match &self.open {
            Some(f) => Some(f.pos),
            None if self.current < self.trips.len() && self.next_pos > 0 => Some(self.next_pos - 1),
            None => None,
        };
        let next = match previous {
            Some(p) => p + 1,
            None => self.next_pos,
        };
        let delay_s = self.visits.last().filter(|v| v.trip_id == trip.id).map(|v| v.delay_s);
        MatchedLocation {
            location: self.samples[idx].clone(),
            trip_id: trip.id.clone(),
            previous_stop: previous.map(|p| trip.stop_times[p].stop_id.clone()),
            next_stop: (next < n).then(|| trip.stop_times[next].stop_id.clone()),
            destination_stop: trip.stop_times[n - 1].stop_id.clone(),
            delay_s,
        }
    }

    /// Ends the stream. A stop whose fence is still open has no observed departure and is not recorded.
    pub fn finish(self) -> VehicleDayTrack {
        VehicleDayTrack { line: self.line, brigade: self.brigade, date: self.date, samples: self.samples, visits: self.visits }
    }
}

/// Matches one record against the vehicle's tracker state.
pub fn match_location(record: VehicleLocation, state: &mut VehicleTracker<'_>) -> Result<MatchedLocation, UnmatchedRecord> {
    state.observe(record)
}
