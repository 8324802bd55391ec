//! Planar geometry in a local metric frame and a uniform grid index over WGS84 points.

use std::collections::HashMap;

use crate::geodesy::{bbox_deltas, haversine_m, LatLon};

pub type Xy = (f64, f64);

/// Shoelace area; positive for counter-clockwise rings.
pub fn signed_area(ring: &[Xy]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let (x1, y1) = ring[i];
        let (x2, y2) = ring[(i + 1) % n];
        acc += x1 * y2 - x2 * y1;
    }
    acc / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RingPosition {
    Inside,
    OnBoundary,
    Outside,
}

fn on_segment(p: Xy, a: Xy, b: Xy) -> bool {
    let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
    if cross != 0.0 {
        return false;
    }
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

/// Crossing-number test with exact boundary detection.
pub fn ring_position(p: Xy, ring: &[Xy]) -> RingPosition {
    let n = ring.len();
    let mut inside = false;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        if on_segment(p, a, b) {
            return RingPosition::OnBoundary;
        }
        if (a.1 > p.1) != (b.1 > p.1) {
            let x = a.0 + (p.1 - a.1) * (b.0 - a.0) / (b.1 - a.1);
            if p.0 < x {
                inside = !inside;
            }
        }
    }
    if inside {
        RingPosition::Inside
    } else {
        RingPosition::Outside
    }
}

/// Position against a polygon given as exterior ring plus holes.
pub fn polygon_position(p: Xy, rings: &[Vec<Xy>]) -> RingPosition {
    let Some((outer, holes)) = rings.split_first() else { return RingPosition::Outside };
    match ring_position(p, outer) {
        RingPosition::Inside => {}
        other => return other,
    }
    for h in holes {
        match ring_position(p, h) {
            RingPosition::Inside => return RingPosition::Outside,
            RingPosition::OnBoundary => return RingPosition::OnBoundary,
            RingPosition::Outside => {}
        }
    }
    RingPosition::Inside
}

/// Clips `subject` against a convex counter-clockwise `clip` polygon (Sutherland–Hodgman).
pub fn clip_convex(subject: &[Xy], clip: &[Xy]) -> Vec<Xy> {
    let mut output = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % n];
        let inside = |p: Xy| (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0) >= 0.0;
        let intersect = |p: Xy, q: Xy| {
            let (dx, dy) = (q.0 - p.0, q.1 - p.1);
            let (ex, ey) = (b.0 - a.0, b.1 - a.1);
            let denom = dx * ey - dy * ex;
            let t = ((a.0 - p.0) * ey - (a.1 - p.1) * ex) / denom;
            (p.0 + t * dx, p.1 + t * dy)
        };
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            match (inside(prev), inside(cur)) {
                (true, true) => output.push(cur),
                (true, false) => output.push(intersect(prev, cur)),
                (false, true) => {
                    output.push(intersect(prev, cur));
                    output.push(cur);
                }
                (false, false) => {}
            }
        }
    }
    output
}

/// Regular polygon approximating a circle, counter-clockwise.
pub fn circle_polygon(center: Xy, radius: f64, vertices: usize) -> Vec<Xy> {
    (0..vertices)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / vertices as f64;
            (center.0 + radius * a.cos(), center.1 + radius * a.sin())
        })
        .collect()
}

/// Length of segment `a`-`b` lying within distance `r` of the origin.
pub fn segment_length_in_disc(a: Xy, b: Xy, r: f64) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return 0.0;
    }
    // |a + t d|^2 = r^2
    let qa = len2;
    let qb = 2.0 * (a.0 * dx + a.1 * dy);
    let qc = a.0 * a.0 + a.1 * a.1 - r * r;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc <= 0.0 {
        return 0.0;
    }
    let s = disc.sqrt();
    let t0 = ((-qb - s) / (2.0 * qa)).max(0.0);
    let t1 = ((-qb + s) / (2.0 * qa)).min(1.0);
    if t1 <= t0 {
        0.0
    } else {
        (t1 - t0) * len2.sqrt()
    }
}

/// Uniform lat/lon grid over point items.
#[derive(Debug, Clone)]
pub struct PointGrid {
    cell_deg: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
    points: Vec<LatLon>,
}

impl PointGrid {
    pub fn new(points: Vec<LatLon>, cell_deg: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(cell_deg, *p)).or_default().push(i);
        }
        Self { cell_deg, cells, points }
    }

    fn key(cell: f64, p: LatLon) -> (i64, i64) {
        ((p.lat / cell).floor() as i64, (p.lon / cell).floor() as i64)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> LatLon {
        self.points[i]
    }

    /// Indices of points within `radius_m` (great-circle) of `center`, ascending.
    pub fn within(&self, center: LatLon, radius_m: f64) -> Vec<usize> {
        let (dlat, dlon) = bbox_deltas(center, radius_m);
        let lo = Self::key(self.cell_deg, LatLon::new(center.lat - dlat, center.lon - dlon));
        let hi = Self::key(self.cell_deg, LatLon::new(center.lat + dlat, center.lon + dlon));
        let mut out = Vec::new();
        if (hi.0 - lo.0 + 1) * (hi.1 - lo.1 + 1) > 4 * self.cells.len() as i64 + 16 {
            out.extend((0..self.points.len()).filter(|&i| haversine_m(center, self.points[i]) <= radius_m));
            return out;
        }
        for a in lo.0..=hi.0 {
            for b in lo.1..=hi.1 {
                if let Some(ids) = self.cells.get(&(a, b)) {
                    out.extend(ids.iter().copied().filter(|&i| haversine_m(center, self.points[i]) <= radius_m));
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Nearest point accepted by `filter`, by great-circle distance; ties by index.
    pub fn nearest_by(&self, center: LatLon, max_m: f64, filter: impl Fn(usize) -> bool) -> Option<(usize, f64)> {
        let mut radius = (self.cell_deg * 111_000.0).max(50.0);
        loop {
            let r = radius.min(max_m);
            let best = self
                .within(center, r)
                .into_iter()
                .filter(|&i| filter(i))
                .map(|i| (i, haversine_m(center, self.points[i])))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            if best.is_some() || r >= max_m {
                return best;
            }
            radius *= 2.0;
        }
    }
}
