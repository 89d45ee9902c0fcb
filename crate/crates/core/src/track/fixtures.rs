//! Procedurally generated track maps used by the tests, the examples and
//! the CLI, so nothing depends on downloaded assets.

use std::f64::consts::PI;

use ndarray::Array2;

use super::edt::distance_field;
use super::TrackMap;
use crate::geometry::Point;

/// Named built-in tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fixture {
    /// Ring between radii 4 m and 5 m.
    Annulus,
    /// 14 m × 7 m rounded rectangle, 2 m corner radius, 2 m wide.
    RoundedRectangle,
    /// Kidney-shaped loop with a 93.7 m centerline, 2 m wide.
    AutLike,
    /// Technical circuit with a 236.8 m centerline, 2 m wide: long straights,
    /// two hairpins and a kink, all corners filleted to 1.5 m.
    EspLike,
}

impl Fixture {
    pub const ALL: [Fixture; 4] = [
        Fixture::Annulus,
        Fixture::RoundedRectangle,
        Fixture::AutLike,
        Fixture::EspLike,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Fixture::Annulus => "annulus",
            Fixture::RoundedRectangle => "rounded_rectangle",
            Fixture::AutLike => "aut",
            Fixture::EspLike => "esp",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn build(self) -> TrackMap {
        match self {
            Fixture::Annulus => annulus(5.0, 4.0, 0.05),
            Fixture::RoundedRectangle => rounded_rectangle(14.0, 7.0, 2.0, 1.0, 0.05),
            Fixture::AutLike => radial_loop(&[(2, 0.3, 0.0), (3, 0.0, 0.1)], 93.7, 1.0, 0.05),
            Fixture::EspLike => filleted_polygon(&ESP_VERTICES, 1.5, 236.8, 1.0, 0.05),
        }
    }
}

const ESP_VERTICES: [Point; 11] = [
    Point { x: 0.0, y: 0.0 },
    Point { x: 70.0, y: 0.0 },
    Point { x: 70.0, y: 3.0 },
    Point { x: 30.0, y: 3.0 },
    Point { x: 30.0, y: 20.0 },
    Point { x: 42.0, y: 20.0 },
    Point { x: 50.0, y: 15.0 },
    Point { x: 58.0, y: 20.0 },
    Point { x: 64.0, y: 20.0 },
    Point { x: 64.0, y: 23.0 },
    Point { x: 0.0, y: 23.0 },
];

/// Free ring `inner ≤ r ≤ outer` centered on the world origin.
pub fn annulus(outer: f64, inner: f64, resolution: f64) -> TrackMap {
    let half = outer + 0.5;
    let n = (2.0 * half / resolution).ceil() as usize;
    let origin = [-half, -half, 0.0];
    let grid = Array2::from_shape_fn((n, n), |(r, c)| {
        let x = origin[0] + (c as f64 + 0.5) * resolution;
        let y = origin[1] + (r as f64 + 0.5) * resolution;
        let rad = x.hypot(y);
        !(inner..=outer).contains(&rad)
    });
    TrackMap::from_grid(grid, resolution, origin).expect("annulus has free space")
}

/// Straight corridor along +x with walls above and below and open ends.
/// The free band spans y ∈ [0, width].
pub fn corridor(length: f64, width: f64, resolution: f64) -> TrackMap {
    let wall = 2;
    let free = (width / resolution).round() as usize;
    let rows = free + 2 * wall;
    let cols = (length / resolution).round() as usize;
    let grid = Array2::from_shape_fn((rows, cols), |(r, _)| r < wall || r >= wall + free);
    let origin = [0.0, -(wall as f64) * resolution, 0.0];
    TrackMap::from_grid(grid, resolution, origin).expect("corridor has free space")
}

/// Rounded-rectangle centerline of overall size `length × height`.
pub fn rounded_rectangle_centerline(length: f64, height: f64, corner: f64, spacing: f64) -> Vec<Point> {
    let (hx, hy) = (length / 2.0 - corner, height / 2.0 - corner);
    let mut pts = Vec::new();
    let corners = [(hx, -hy, -PI / 2.0), (hx, hy, 0.0), (-hx, hy, PI / 2.0), (-hx, -hy, PI)];
    // counter-clockwise: bottom straight, right arc, ... starting at (−hx, −h/2)
    for (k, &(cx, cy, a0)) in corners.iter().enumerate() {
        let (px, py, _) = corners[(k + 3) % 4];
        let start = Point::new(px + corner * a0.cos(), py + corner * a0.sin());
        let end = Point::new(cx + corner * a0.cos(), cy + corner * a0.sin());
        let len = start.dist(end);
        let n = (len / spacing).ceil() as usize;
        for i in 0..n {
            let t = i as f64 / n as f64;
            pts.push(Point::new(start.x + t * (end.x - start.x), start.y + t * (end.y - start.y)));
        }
        let n_arc = ((PI / 2.0 * corner) / spacing).ceil() as usize;
        for i in 0..n_arc {
            let a = a0 + PI / 2.0 * i as f64 / n_arc as f64;
            pts.push(Point::new(cx + corner * a.cos(), cy + corner * a.sin()));
        }
    }
    pts
}

pub fn rounded_rectangle(length: f64, height: f64, corner: f64, half_width: f64, resolution: f64) -> TrackMap {
    let pts = rounded_rectangle_centerline(length, height, corner, resolution / 4.0);
    rasterize_loop(&pts, half_width, resolution)
}

/// Closed curve `r(t) = 1 + Σ a_k cos(k t) + b_k sin(k t)` scaled to the
/// requested length.
pub fn radial_loop_centerline(harmonics: &[(u32, f64, f64)], length: f64, samples: usize) -> Vec<Point> {
    let raw: Vec<Point> = (0..samples)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / samples as f64;
            let r = 1.0
                + harmonics
                    .iter()
                    .map(|&(k, a, b)| a * (k as f64 * t).cos() + b * (k as f64 * t).sin())
                    .sum::<f64>();
            Point::new(r * t.cos(), r * t.sin())
        })
        .collect();
    let perimeter: f64 = (0..samples).map(|i| raw[i].dist(raw[(i + 1) % samples])).sum();
    let scale = length / perimeter;
    raw.into_iter().map(|p| Point::new(p.x * scale, p.y * scale)).collect()
}

pub fn radial_loop(harmonics: &[(u32, f64, f64)], length: f64, half_width: f64, resolution: f64) -> TrackMap {
    let n = ((length / (resolution / 4.0)).ceil() as usize).max(64);
    let pts = radial_loop_centerline(harmonics, length, n);
    rasterize_loop(&pts, half_width, resolution)
}

/// Closed polygon with every corner rounded to `radius`, scaled so the
/// centerline is `length` long. Vertices must leave room for the fillets.
pub fn filleted_polygon_centerline(vertices: &[Point], radius: f64, length: f64, spacing: f64) -> Vec<Point> {
    let n = vertices.len();
    let turn = |i: usize| {
        let (p, v, q) = (vertices[(i + n - 1) % n], vertices[i], vertices[(i + 1) % n]);
        let a_in = (v.y - p.y).atan2(v.x - p.x);
        let a_out = (q.y - v.y).atan2(q.x - v.x);
        (a_in, crate::geometry::wrap_angle(a_out - a_in))
    };
    let perimeter: f64 = (0..n).map(|i| vertices[i].dist(vertices[(i + 1) % n])).sum();
    let cut: f64 = (0..n)
        .map(|i| {
            let th = turn(i).1.abs();
            2.0 * radius * (th / 2.0).tan() - radius * th
        })
        .sum();
    let scale = (length + cut) / perimeter;
    let v: Vec<Point> = vertices.iter().map(|p| Point::new(p.x * scale, p.y * scale)).collect();

    let mut pts = Vec::new();
    for i in 0..n {
        let (a_in, th) = turn(i);
        let t = radius * (th.abs() / 2.0).tan();
        let start = Point::new(v[i].x - t * a_in.cos(), v[i].y - t * a_in.sin());
        let side = th.signum();
        let center = Point::new(start.x - side * radius * a_in.sin(), start.y + side * radius * a_in.cos());
        let a0 = a_in - side * PI / 2.0;
        let n_arc = ((th.abs() * radius) / spacing).ceil().max(1.0) as usize;
        for k in 0..n_arc {
            let a = a0 + th * k as f64 / n_arc as f64;
            pts.push(Point::new(center.x + radius * a.cos(), center.y + radius * a.sin()));
        }
        let (a_next, th_next) = turn((i + 1) % n);
        let t_next = radius * (th_next.abs() / 2.0).tan();
        let end = Point::new(v[i].x + t * (a_in + th).cos(), v[i].y + t * (a_in + th).sin());
        let next_start = Point::new(v[(i + 1) % n].x - t_next * a_next.cos(), v[(i + 1) % n].y - t_next * a_next.sin());
        let len = end.dist(next_start);
        let m = (len / spacing).ceil() as usize;
        for k in 0..m {
            let f = k as f64 / m as f64;
            pts.push(Point::new(end.x + f * (next_start.x - end.x), end.y + f * (next_start.y - end.y)));
        }
    }
    pts
}

pub fn filleted_polygon(vertices: &[Point], radius: f64, length: f64, half_width: f64, resolution: f64) -> TrackMap {
    let pts = filleted_polygon_centerline(vertices, radius, length, resolution / 4.0);
    rasterize_loop(&pts, half_width, resolution)
}

/// Marks cells within `half_width` of a densely sampled closed curve as free
/// and everything else as occupied.
pub fn rasterize_loop(points: &[Point], half_width: f64, resolution: f64) -> TrackMap {
    let margin = half_width + 1.0;
    let xmin = points.iter().map(|p| p.x).fold(f64::INFINITY, f64::min) - margin;
    let ymin = points.iter().map(|p| p.y).fold(f64::INFINITY, f64::min) - margin;
    let xmax = points.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max) + margin;
    let ymax = points.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max) + margin;
    let cols = ((xmax - xmin) / resolution).ceil() as usize;
    let rows = ((ymax - ymin) / resolution).ceil() as usize;
    let mut seeds = Array2::from_elem((rows, cols), false);
    for p in points {
        let c = ((p.x - xmin) / resolution).floor() as usize;
        let r = ((p.y - ymin) / resolution).floor() as usize;
        seeds[[r.min(rows - 1), c.min(cols - 1)]] = true;
    }
    let dist = distance_field(&seeds, resolution);
    let grid = dist.mapv(|d| d > half_width);
    TrackMap::from_grid(grid, resolution, [xmin, ymin, 0.0]).expect("loop has free space")
}
