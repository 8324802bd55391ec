use std::collections::BTreeMap;

use super::model::{format_time, ServiceSeconds, StopTime, TransitTrip, TripStop};
use super::GtfsError;

/// Hour of day -> headway in seconds.
pub type HeadwayTable = BTreeMap<u8, i32>;

/// Stop pattern of a frequency-based line, offsets relative to the trip start.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyPattern {
    pub route_id: String,
    pub service_id: String,
    pub trip_prefix: String,
    /// (stop id, arrival offset, departure offset)
    pub stops: Vec<(String, ServiceSeconds, ServiceSeconds)>,
}

/// Expands an hourly headway table into explicit trips.
///
/// Every covered hour gets departures at `hour*3600 + k*headway` for
/// `k < floor(3600 / headway)`, so each band is anchored at its hour boundary.
pub fn expand_frequency_service(pattern: &FrequencyPattern, headways: &HeadwayTable) -> Result<Vec<TransitTrip>, GtfsError> {
    if let Some((&hour, _)) = headways.iter().find(|(_, &h)| h <= 0) {
        return Err(GtfsError::InvalidHeadway { hour });
    }
    let mut trips = Vec::new();
    for (&hour, &headway) in headways {
        let base = hour as ServiceSeconds * 3600;
        for k in 0..(3600 / headway) {
            let start = base + k * headway;
            let stop_times = pattern
                .stops
                .iter()
                .enumerate()
                .map(|(i, (stop_id, arr, dep))| TripStop {
                    stop_id: stop_id.clone(),
                    time: StopTime { arrival: start + arr, departure: start + dep, sequence: i as u32 + 1 },
                })
                .collect();
            trips.push(TransitTrip {
                id: format!("{}_{}", pattern.trip_prefix, format_time(start).replace(':', "")),
                route_id: pattern.route_id.clone(),
                service_id: pattern.service_id.clone(),
                block_id: None,
                stop_times,
            });
        }
    }
    Ok(trips)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern() -> FrequencyPattern {
        FrequencyPattern {
            route_id: "M1".into(),
            service_id: "wk".into(),
            trip_prefix: "M1".into(),
            stops: vec![("a".into(), 0, 0), ("b".into(), 120, 150)],
        }
    }

    fn starts(trips: &[TransitTrip]) -> Vec<String> {
        trips.iter().map(|t| format_time(t.first_departure().unwrap())).collect()
    }

    #[test]
    fn ten_minute_headway_gives_six_departures() {
        let trips = expand_frequency_service(&pattern(), &BTreeMap::from([(8, 600)])).unwrap();
        assert_eq!(starts(&trips), ["08:00:00", "08:10:00", "08:20:00", "08:30:00", "08:40:00", "08:50:00"]);
        assert_eq!(trips[1].stop_times[1].time.arrival, 8 * 3600 + 600 + 120);
    }

    #[test]
    fn hourly_headway_gives_one_departure() {
        let trips = expand_frequency_service(&pattern(), &BTreeMap::from([(8, 3600)])).unwrap();
        assert_eq!(starts(&trips), ["08:00:00"]);
    }

    #[test]
    fn mixed_headways_enumerate() {
        let table = BTreeMap::from([(7, 900), (8, 600)]);
        let trips = expand_frequency_service(&pattern(), &table).unwrap();
        // enumeration: 07:00,07:15,07:30,07:45 then 08:00..08:50
        let mut expected = Vec::new();
        for (h, hw) in [(7, 900), (8, 600)] {
            let mut t = h * 3600;
            while t < (h + 1) * 3600 {
                expected.push(format_time(t));
                t += hw;
            }
        }
        assert_eq!(starts(&trips), expected);
        assert_eq!(trips.len(), 10);
    }

    #[test]
    fn zero_headway_rejected() {
        let err = expand_frequency_service(&pattern(), &BTreeMap::from([(8, 0)])).unwrap_err();
        assert!(matches!(err, GtfsError::InvalidHeadway { hour: 8 }));
    }

    #[test]
    fn count_is_floor_of_hour_over_headway() {
        for hw in [1, 7, 599, 600, 601, 1000, 1799, 3600, 5000] {
            let trips = expand_frequency_service(&pattern(), &BTreeMap::from([(5, hw)])).unwrap();
            assert_eq!(trips.len() as i32, 3600 / hw, "headway {hw}");
        }
    }
}
