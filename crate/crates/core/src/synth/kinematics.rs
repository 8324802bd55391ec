use serde::{Deserialize, Serialize};

use crate::clock::Epoch;
use crate::geodesy::LatLon;

/// A scheduled stop of a simulated vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub pos: LatLon,
    pub arrive: Epoch,
    pub depart: Epoch,
}

/// A standstill on the edge leaving waypoint `after`, at `fraction` of its length.
/// The vehicle moves faster on the rest of the edge so it still arrives on time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Halt {
    pub after: usize,
    pub fraction: f64,
    pub duration_s: Epoch,
}

fn lerp(a: LatLon, b: LatLon, f: f64) -> LatLon {
    LatLon::new(a.lat + (b.lat - a.lat) * f, a.lon + (b.lon - a.lon) * f)
}

/// Position at time `t` for a vehicle that dwells at each waypoint and moves
/// in a straight line at constant speed between consecutive waypoints.
pub fn position_at(waypoints: &[Waypoint], halts: &[Halt], t: Epoch) -> LatLon {
    let first = waypoints.first().expect("at least one waypoint");
    if t <= first.depart {
        return first.pos;
    }
    for (i, w) in waypoints.windows(2).enumerate() {
        let (a, b) = (&w[0], &w[1]);
        if t <= a.depart {
            return a.pos;
        }
        if t >= b.arrive {
            continue;
        }
        let span = (b.arrive - a.depart) as f64;
        let elapsed = (t - a.depart) as f64;
        let frac = match halts.iter().find(|h| h.after == i) {
            Some(h) => {
                let halt = (h.duration_s as f64).min(span * 0.9);
                let moving = span - halt;
                let stop_at = h.fraction * moving;
                if elapsed < stop_at {
                    elapsed / moving
                } else if elapsed < stop_at + halt {
                    h.fraction
                } else {
                    (elapsed - halt) / moving
                }
            }
            None => elapsed / span,
        };
        return lerp(a.pos, b.pos, frac);
    }
    waypoints.last().unwrap().pos
}

/// Samples every `cadence_s` seconds over `[from, to]`.
pub fn sample_trace(waypoints: &[Waypoint], halts: &[Halt], from: Epoch, to: Epoch, cadence_s: Epoch) -> Vec<(Epoch, LatLon)> {
    let mut out = Vec::new();
    let mut t = from;
    while t <= to {
        out.push((t, position_at(waypoints, halts, t)));
        t += cadence_s;
    }
    out
}
