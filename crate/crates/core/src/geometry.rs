//! Planar helpers shared by the track, raceline and pursuit code.

use std::f64::consts::PI;

/// Wraps an angle into (−π, π].
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Result of projecting a point onto a [`Polyline`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the closest point.
    pub s: f64,
    /// Signed lateral offset, positive to the left of the direction of travel.
    pub lateral: f64,
    /// Index of the segment containing the closest point.
    pub segment: usize,
    /// Unsigned distance to the closest point.
    pub distance: f64,
}

/// An arc-length parameterized polyline, optionally closed.
///
/// For closed polylines the last point is *not* repeated; the closing segment
/// runs from the last point back to the first.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<Point>,
    cum_s: Vec<f64>,
    total_length: f64,
    closed: bool,
}

impl Polyline {
    /// Builds the arc-length table. Returns `None` if fewer than two points are
    /// given, any point is non-finite, or two consecutive points coincide.
    pub fn new(points: Vec<Point>, closed: bool) -> Option<Self> {
        if points.len() < 2 || points.iter().any(|p| !p.is_finite()) {
            return None;
        }
        let mut cum_s = Vec::with_capacity(points.len());
        cum_s.push(0.0);
        for w in points.windows(2) {
            let d = w[0].dist(w[1]);
            if d <= 0.0 {
                return None;
            }
            cum_s.push(cum_s.last().unwrap() + d);
        }
        let mut total_length = *cum_s.last().unwrap();
        if closed {
            let d = points.last().unwrap().dist(points[0]);
            if d <= 0.0 {
                return None;
            }
            total_length += d;
        }
        Some(Self {
            points,
            cum_s,
            total_length,
            closed,
        })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn cum_s(&self) -> &[f64] {
        &self.cum_s
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn segment_count(&self) -> usize {
        if self.closed {
            self.points.len()
        } else {
            self.points.len() - 1
        }
    }

    /// Endpoints and start arc length of segment `i`.
    pub fn segment(&self, i: usize) -> (Point, Point, f64) {
        let a = self.points[i];
        let b = self.points[(i + 1) % self.points.len()];
        (a, b, self.cum_s[i])
    }

    fn segment_length(&self, i: usize) -> f64 {
        if i + 1 < self.cum_s.len() {
            self.cum_s[i + 1] - self.cum_s[i]
        } else {
            self.total_length - self.cum_s[i]
        }
    }

    /// Maps an arc length into [0, total_length) for closed polylines and
    /// clamps it for open ones.
    pub fn normalize_s(&self, s: f64) -> f64 {
        if self.closed {
            let r = s.rem_euclid(self.total_length);
            if r >= self.total_length {
                0.0
            } else {
                r
            }
        } else {
            s.clamp(0.0, self.total_length)
        }
    }

    /// Forward arc distance from `from` to `to`, wrapping on closed lines.
    pub fn forward_distance(&self, from: f64, to: f64) -> f64 {
        if self.closed {
            (to - from).rem_euclid(self.total_length)
        } else {
            to - from
        }
    }

    /// Index of the segment containing arc length `s`.
    pub fn segment_at(&self, s: f64) -> usize {
        let s = self.normalize_s(s);
        let idx = match self.cum_s.binary_search_by(|v| v.partial_cmp(&s).unwrap()) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        idx.min(self.segment_count() - 1)
    }

    /// Linearly interpolated point at arc length `s`.
    pub fn point_at(&self, s: f64) -> Point {
        let s = self.normalize_s(s);
        let i = self.segment_at(s);
        let (a, b, s0) = self.segment(i);
        let t = ((s - s0) / self.segment_length(i)).clamp(0.0, 1.0);
        Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
    }

    /// Heading of segment `i`.
    pub fn segment_heading(&self, i: usize) -> f64 {
        let (a, b, _) = self.segment(i);
        (b.y - a.y).atan2(b.x - a.x)
    }

    /// Tangent heading at vertex `i` from a central difference of neighbours.
    pub fn vertex_heading(&self, i: usize) -> f64 {
        let n = self.points.len();
        let (prev, next) = if self.closed {
            (self.points[(i + n - 1) % n], self.points[(i + 1) % n])
        } else if i == 0 {
            (self.points[0], self.points[1])
        } else if i == n - 1 {
            (self.points[n - 2], self.points[n - 1])
        } else {
            (self.points[i - 1], self.points[i + 1])
        };
        (next.y - prev.y).atan2(next.x - prev.x)
    }

    /// Tangent heading at arc length `s`, interpolated between vertex headings.
    pub fn heading_at(&self, s: f64) -> f64 {
        let s = self.normalize_s(s);
        let i = self.segment_at(s);
        let j = if self.closed {
            (i + 1) % self.points.len()
        } else {
            (i + 1).min(self.points.len() - 1)
        };
        let t = ((s - self.cum_s[i]) / self.segment_length(i)).clamp(0.0, 1.0);
        let h0 = self.vertex_heading(i);
        let h1 = self.vertex_heading(j);
        wrap_angle(h0 + t * wrap_angle(h1 - h0))
    }

    fn project_segment(&self, i: usize, p: Point) -> Projection {
        let (a, b, s0) = self.segment(i);
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let len2 = dx * dx + dy * dy;
        let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
        let (cx, cy) = (a.x + t * dx, a.y + t * dy);
        let distance = (p.x - cx).hypot(p.y - cy);
        let cross = dx * (p.y - a.y) - dy * (p.x - a.x);
        let lateral = if cross >= 0.0 { distance } else { -distance };
        Projection {
            s: self.normalize_s(s0 + t * len2.sqrt()),
            lateral,
            segment: i,
            distance,
        }
    }

    /// Closest-point projection over every segment.
    pub fn project(&self, p: Point) -> Projection {
        self.project_range(p, 0..self.segment_count())
            .expect("polyline has at least one segment")
    }

    fn project_range(&self, p: Point, segments: impl Iterator<Item = usize>) -> Option<Projection> {
        let mut best: Option<Projection> = None;
        for i in segments {
            let cand = self.project_segment(i, p);
            if best.map_or(true, |b| cand.distance < b.distance) {
                best = Some(cand);
            }
        }
        best
    }

    /// Projection restricted to segments overlapping `[hint − window, hint + window]`.
    ///
    /// Falls back to the global search when the window holds no segment
    /// within `window` of the point.
    pub fn project_near(&self, p: Point, hint_s: f64, window: f64) -> Projection {
        if window * 2.0 >= self.total_length {
            return self.project(p);
        }
        let lo = hint_s - window;
        let hi = hint_s + window;
        let in_window = |i: usize| {
            let s0 = self.cum_s[i];
            let s1 = s0 + self.segment_length(i);
            if self.closed {
                let shift = |s: f64| s - ((s - lo) / self.total_length).floor() * self.total_length;
                // segment start relative to window start, wrapped into [lo, lo + L)
                let a = shift(s0);
                let b = a + (s1 - s0);
                a <= hi || b >= lo + self.total_length
            } else {
                s1 >= lo && s0 <= hi
            }
        };
        match self.project_range(p, (0..self.segment_count()).filter(|&i| in_window(i))) {
            Some(pr) if pr.distance <= window => pr,
            _ => self.project(p),
        }
    }

    /// Signed area of a closed polyline (positive when counter-clockwise).
    pub fn signed_area(&self) -> f64 {
        signed_area(&self.points)
    }

    /// Resamples at uniform spacing close to `spacing`.
    pub fn resample(&self, spacing: f64) -> Option<Polyline> {
        let n_seg = (self.total_length / spacing).round().max(2.0) as usize;
        let step = self.total_length / n_seg as f64;
        let count = if self.closed { n_seg } else { n_seg + 1 };
        let pts = (0..count)
            .map(|k| {
                if !self.closed && k == n_seg {
                    *self.points.last().unwrap()
                } else {
                    self.point_at(k as f64 * step)
                }
            })
            .collect();
        Polyline::new(pts, self.closed)
    }
}

pub fn signed_area(points: &[Point]) -> f64 {
    let n = points.len();
    let mut a = 0.0;
    for i in 0..n {
        let p = points[i];
        let q = points[(i + 1) % n];
        a += p.x * q.y - q.x * p.y;
    }
    0.5 * a
}
