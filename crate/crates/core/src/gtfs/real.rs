use std::collections::HashMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::model::{Provenance, ServiceCalendar, ServiceSeconds, Timetable, TransitTrip, TripStop};
use super::GtfsError;
use crate::clock::{Epoch, ServiceClock};
use crate::vehicle_flow::{EdgeSegment, StopVisit};

/// One observed departure of a trip from a stop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopDeparture {
    pub trip_id: String,
    pub stop_id: String,
    pub sequence: u32,
    pub epoch: Epoch,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RealTimetableReport {
    pub kept_trips: usize,
    pub observed_stop_times: usize,
    pub completed_stop_times: usize,
    pub dropped_unobserved: usize,
    pub dropped_out_of_order: usize,
}

/// Flattens segments into departure observations at both of their stops.
pub fn observations_from_segments<'a>(segments: impl IntoIterator<Item = &'a EdgeSegment>) -> Vec<StopDeparture> {
    let mut out = Vec::new();
    for s in segments {
        out.push(StopDeparture {
            trip_id: s.trip_id.clone(),
            stop_id: s.from_stop.clone(),
            sequence: s.from_seq,
            epoch: s.departure_from,
        });
        out.push(StopDeparture {
            trip_id: s.trip_id.clone(),
            stop_id: s.to_stop.clone(),
            sequence: s.to_seq,
            epoch: s.departure_to,
        });
    }
    out
}

/// Departure observations straight from confirmed stop visits.
pub fn observations_from_visits<'a>(visits: impl IntoIterator<Item = &'a StopVisit>) -> Vec<StopDeparture> {
    visits
        .into_iter()
        .map(|v| StopDeparture { trip_id: v.trip_id.clone(), stop_id: v.stop_id.clone(), sequence: v.sequence, epoch: v.epoch })
        .collect()
}

/// Reconstructs the timetable actually operated on `date`.
///
/// Observed stops take the observed departure. Unobserved stops of a
/// partially observed trip are shifted by the delay at the nearest observed
/// stop (the earlier one on ties). Trips without any observation are
/// dropped, as are trips whose observations are out of stop order.
pub fn build_real_timetable(
    observations: &[StopDeparture],
    planned: &Timetable,
    date: NaiveDate,
    clock: &ServiceClock,
) -> Result<(Timetable, RealTimetableReport), GtfsError> {
    if observations.is_empty() {
        return Err(GtfsError::EmptyTraceError);
    }
    let midnight = clock.midnight(date);
    let mut by_trip: HashMap<&str, Vec<&StopDeparture>> = HashMap::new();
    for obs in observations {
        by_trip.entry(obs.trip_id.as_str()).or_default().push(obs);
    }

    let service_id = format!("real_{}", date.format("%Y%m%d"));
    let mut report = RealTimetableReport::default();
    let mut trips = Vec::new();
    for trip in planned.trips_on(date) {
        let Some(obs) = by_trip.get(trip.id.as_str()) else {
            report.dropped_unobserved += 1;
            continue;
        };
        let mut observed: Vec<Option<ServiceSeconds>> = vec![None; trip.stop_times.len()];
        for o in obs {
            let pos = trip
                .stop_times
                .iter()
                .position(|st| st.time.sequence == o.sequence && st.stop_id == o.stop_id);
            if let Some(i) = pos {
                let secs = (o.epoch - midnight) as ServiceSeconds;
                observed[i] = Some(observed[i].map_or(secs, |prev: ServiceSeconds| prev.min(secs)));
            }
        }
        if observed.iter().all(Option::is_none) {
            report.dropped_unobserved += 1;
            continue;
        }
        let seen: Vec<ServiceSeconds> = observed.iter().flatten().copied().collect();
        if seen.windows(2).any(|w| w[1] <= w[0]) {
            report.dropped_out_of_order += 1;
            continue;
        }
        match complete_trip(trip, &observed) {
            Some(stop_times) => {
                report.kept_trips += 1;
                report.observed_stop_times += seen.len();
                report.completed_stop_times += stop_times.len() - seen.len();
                trips.push(TransitTrip {
                    id: trip.id.clone(),
                    route_id: trip.route_id.clone(),
                    service_id: service_id.clone(),
                    block_id: trip.block_id.clone(),
                    stop_times,
                });
            }
            None => report.dropped_out_of_order += 1,
        }
    }
    if report.kept_trips == 0 && report.dropped_out_of_order == 0 {
        return Err(GtfsError::EmptyTraceError);
    }

    let tt = Timetable::new(
        planned.stops.clone(),
        planned.routes.clone(),
        trips,
        vec![(service_id, ServiceCalendar::single_day(date))],
        Provenance::Real(date),
    )?;
    Ok((tt, report))
}

fn complete_trip(trip: &TransitTrip, observed: &[Option<ServiceSeconds>]) -> Option<Vec<TripStop>> {
    let n = observed.len();
    let obs_idx: Vec<usize> = (0..n).filter(|&i| observed[i].is_some()).collect();
    let planned_dep: Vec<ServiceSeconds> = trip.stop_times.iter().map(|s| s.time.departure).collect();

    let mut deps: Vec<ServiceSeconds> = (0..n)
        .map(|i| match observed[i] {
            Some(t) => t,
            None => {
                let j = nearest(&obs_idx, i);
                planned_dep[i] + (observed[j].unwrap() - planned_dep[j])
            }
        })
        .collect();

    if deps.windows(2).any(|w| w[1] <= w[0]) {
        // shifting from different neighbours collided; interpolate inside the
        // observed brackets instead, keeping the planned proportions
        for pair in obs_idx.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let (oa, ob) = (observed[a].unwrap(), observed[b].unwrap());
            let span = (planned_dep[b] - planned_dep[a]) as f64;
            for (i, dep) in deps.iter_mut().enumerate().take(b).skip(a + 1) {
                let frac = (planned_dep[i] - planned_dep[a]) as f64 / span;
                *dep = oa + ((ob - oa) as f64 * frac).round() as ServiceSeconds;
            }
        }
        if deps.windows(2).any(|w| w[1] <= w[0]) {
            return None;
        }
    }

    Some(
        trip.stop_times
            .iter()
            .zip(deps)
            .map(|(st, dep)| {
                let dwell = st.time.departure - st.time.arrival;
                let mut time = st.time;
                time.departure = dep;
                time.arrival = dep - dwell;
                TripStop { stop_id: st.stop_id.clone(), time }
            })
            .collect(),
    )
}

fn nearest(sorted: &[usize], i: usize) -> usize {
    *sorted
        .iter()
        .min_by_key(|&&j| (j.abs_diff(i), j))
        .expect("at least one observed stop")
}
