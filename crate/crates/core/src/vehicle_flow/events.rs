use serde::{Deserialize, Serialize};

use crate::clock::Epoch;
use crate::geodesy::{haversine_m, LatLon};

/// 5 km/h.
pub const DEFAULT_STOP_SPEED_MPS: f64 = 5.0 / 3.6;

pub const STOP_DURATION_THRESHOLDS: [i64; 4] = [30, 60, 90, 120];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopEventCounts {
    pub threshold_s: i64,
    pub below: u32,
    pub at_or_above: u32,
}

/// Classifies every maximal run of samples with speed below `speed_threshold`
/// by its duration (last minus first sample epoch) against each threshold.
pub fn count_stopping_events(series: &[(Epoch, f64)], speed_threshold: f64, thresholds: &[i64]) -> Vec<StopEventCounts> {
    let mut counts: Vec<StopEventCounts> =
        thresholds.iter().map(|&t| StopEventCounts { threshold_s: t, ..Default::default() }).collect();
    let mut run_start: Option<Epoch> = None;
    let mut run_end: Epoch = 0;
    let close = |start: Epoch, end: Epoch, counts: &mut Vec<StopEventCounts>| {
        let d = end - start;
        for c in counts.iter_mut() {
            if d < c.threshold_s {
                c.below += 1;
            } else {
                c.at_or_above += 1;
            }
        }
    };
    for &(t, v) in series {
        if v < speed_threshold {
            run_start.get_or_insert(t);
            run_end = t;
        } else if let Some(s) = run_start.take() {
            close(s, run_end, &mut counts);
        }
    }
    if let Some(s) = run_start {
        close(s, run_end, &mut counts);
    }
    counts
}

/// Per-sample speed: the smaller of the great-circle speeds over the
/// intervals before and after the sample. Zero-length intervals are ignored.
pub fn speed_series(samples: &[(Epoch, LatLon)]) -> Vec<(Epoch, f64)> {
    let interval: Vec<Option<f64>> = samples
        .windows(2)
        .map(|w| {
            let dt = (w[1].0 - w[0].0) as f64;
            (dt > 0.0).then(|| haversine_m(w[0].1, w[1].1) / dt)
        })
        .collect();
    samples
        .iter()
        .enumerate()
        .map(|(i, &(t, _))| {
            let before = if i > 0 { interval[i - 1] } else { None };
            let after = interval.get(i).copied().flatten();
            let v = match (before, after) {
                (Some(a), Some(b)) => a.min(b),
                (Some(a), None) | (None, Some(a)) => a,
                (None, None) => 0.0,
            };
            (t, v)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(speeds: &[f64]) -> Vec<(Epoch, f64)> {
        speeds.iter().enumerate().map(|(i, &v)| (i as Epoch * 5, v)).collect()
    }

    fn pairs(c: &[StopEventCounts]) -> Vec<(u32, u32)> {
        c.iter().map(|c| (c.below, c.at_or_above)).collect()
    }

    #[test]
    fn no_episode_when_always_fast() {
        let c = count_stopping_events(&series(&[10.0; 20]), DEFAULT_STOP_SPEED_MPS, &STOP_DURATION_THRESHOLDS);
        assert_eq!(pairs(&c), [(0, 0); 4]);
    }

    #[test]
    fn single_short_run() {
        // 4 slow samples at 5 s cadence span 15 s
        let c = count_stopping_events(&series(&[9.0, 0.0, 0.0, 0.5, 1.0, 9.0]), DEFAULT_STOP_SPEED_MPS, &STOP_DURATION_THRESHOLDS);
        assert_eq!(pairs(&c), [(1, 0); 4]);
    }

    #[test]
    fn two_runs_of_45_and_130_seconds() {
        let mut v = vec![10.0];
        v.extend([0.0; 10]); // 45 s
        v.push(10.0);
        v.extend([0.0; 27]); // 130 s
        v.push(10.0);
        let c = count_stopping_events(&series(&v), DEFAULT_STOP_SPEED_MPS, &STOP_DURATION_THRESHOLDS);
        assert_eq!(pairs(&c), [(0, 2), (1, 1), (1, 1), (1, 1)]);
    }

    #[test]
    fn empty_series() {
        let c = count_stopping_events(&[], DEFAULT_STOP_SPEED_MPS, &STOP_DURATION_THRESHOLDS);
        assert_eq!(pairs(&c), [(0, 0); 4]);
    }

    #[test]
    fn halt_samples_get_zero_speed() {
        let p = LatLon::new(52.0, 21.0);
        let q = crate::geodesy::destination(p, 90.0, 50.0);
        let s = speed_series(&[(0, p), (5, q), (10, q), (15, q), (20, crate::geodesy::destination(q, 90.0, 50.0))]);
        let v: Vec<f64> = s.iter().map(|x| x.1).collect();
        assert!((v[0] - 10.0).abs() < 1e-6);
        assert_eq!(&v[1..4], &[0.0, 0.0, 0.0]);
        assert!((v[4] - 10.0).abs() < 1e-6);
    }
}
