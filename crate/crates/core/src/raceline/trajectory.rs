use serde::{Deserialize, Serialize};

use super::curvature::path_curvature;
use super::min_curvature::{min_curvature_path, offset_points, left_normals, MinCurvatureOptions};
use super::speed::{profile_time, speed_profile, speed_profile_from};
use super::RacelineError;
use crate::dynamics::{VehicleParams, G};
use crate::geometry::{Point, Polyline};
use crate::track::Centerline;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RacelineConfig {
    /// Extra clearance beyond the vehicle half-width (m).
    pub margin: f64,
    /// Waypoint spacing of the final trajectory (m).
    pub spacing: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for RacelineConfig {
    fn default() -> Self {
        Self {
            margin: 0.1,
            spacing: 0.1,
            max_iterations: 5,
            tolerance: 1e-3,
        }
    }
}

/// Waypoints with heading, curvature and speed reference.
#[derive(Debug, Clone, PartialEq)]
pub struct RaceTrajectory {
    line: Polyline,
    heading: Vec<f64>,
    curvature: Vec<f64>,
    v_ref: Vec<f64>,
}

/// A broken trajectory invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum TrajectoryViolation {
    SpeedRange { index: usize, v: f64 },
    Lateral { index: usize, accel: f64 },
    Longitudinal { index: usize, accel: f64 },
    OutOfBounds { index: usize, excess: f64 },
}

const CSV_HEADER: [&str; 6] = ["s_m", "x_m", "y_m", "psi_rad", "kappa_radpm", "vx_mps"];

impl RaceTrajectory {
    /// Curvature and speed profile for an arbitrary path.
    pub fn from_path(points: Vec<Point>, closed: bool, params: &VehicleParams) -> Result<Self, RacelineError> {
        let n = points.len();
        let line = Polyline::new(points, closed).ok_or(RacelineError::TooFewPoints(n))?;
        let curvature = path_curvature(line.points(), closed)?;
        let v_ref = speed_profile(&curvature, line.cum_s(), closed.then_some(line.total_length()), params)?;
        Ok(Self::assemble(line, curvature, v_ref))
    }

    pub fn from_parts(
        points: Vec<Point>,
        closed: bool,
        curvature: Vec<f64>,
        v_ref: Vec<f64>,
    ) -> Result<Self, RacelineError> {
        let n = points.len();
        if curvature.len() != n || v_ref.len() != n {
            return Err(RacelineError::LengthMismatch(curvature.len().min(v_ref.len()), n));
        }
        let line = Polyline::new(points, closed).ok_or(RacelineError::TooFewPoints(n))?;
        Ok(Self::assemble(line, curvature, v_ref))
    }

    fn assemble(line: Polyline, curvature: Vec<f64>, v_ref: Vec<f64>) -> Self {
        let heading = (0..line.len()).map(|i| line.vertex_heading(i)).collect();
        Self {
            line,
            heading,
            curvature,
            v_ref,
        }
    }

    pub fn polyline(&self) -> &Polyline {
        &self.line
    }

    pub fn points(&self) -> &[Point] {
        self.line.points()
    }

    pub fn cum_s(&self) -> &[f64] {
        self.line.cum_s()
    }

    pub fn heading(&self) -> &[f64] {
        &self.heading
    }

    pub fn curvature(&self) -> &[f64] {
        &self.curvature
    }

    pub fn v_ref(&self) -> &[f64] {
        &self.v_ref
    }

    pub fn total_length(&self) -> f64 {
        self.line.total_length()
    }

    pub fn is_closed(&self) -> bool {
        self.line.is_closed()
    }

    pub fn len(&self) -> usize {
        self.line.len()
    }

    pub fn is_empty(&self) -> bool {
        self.line.is_empty()
    }

    /// Σ Δs / v over the profile (trapezoidal in 1/v).
    pub fn lap_time(&self) -> f64 {
        profile_time(&self.v_ref, self.cum_s(), self.is_closed().then_some(self.total_length()))
            .expect("trajectory arc length is strictly increasing")
    }

    /// Lap time from a start at waypoint 0 with speed `start_speed`: the
    /// profile is re-solved with that speed pinned, then integrated once.
    pub fn launch_lap_time(&self, params: &VehicleParams, start_speed: f64) -> Result<f64, RacelineError> {
        let closed = self.is_closed().then_some(self.total_length());
        let v = speed_profile_from(&self.curvature, self.cum_s(), closed, params, Some(start_speed))?;
        profile_time(&v, self.cum_s(), closed)
    }

    /// Speed, lateral and longitudinal invariants with relative slack `tol`.
    pub fn check_limits(&self, params: &VehicleParams, tol: f64) -> Vec<TrajectoryViolation> {
        let mut out = Vec::new();
        let n = self.len();
        for i in 0..n {
            let v = self.v_ref[i];
            if v < params.v_min - 1e-9 || v > params.v_max + 1e-9 {
                out.push(TrajectoryViolation::SpeedRange { index: i, v });
            }
            let lat = self.curvature[i].abs() * v * v;
            if lat > params.mu * G * (1.0 + tol) {
                out.push(TrajectoryViolation::Lateral { index: i, accel: lat });
            }
        }
        let segs = if self.is_closed() { n } else { n - 1 };
        for i in 0..segs {
            let j = (i + 1) % n;
            let (_, _, s0) = self.line.segment(i);
            let ds = if j == 0 { self.total_length() - s0 } else { self.cum_s()[j] - s0 };
            let accel = (self.v_ref[j].powi(2) - self.v_ref[i].powi(2)).abs() / (2.0 * ds);
            if accel > params.a_max * (1.0 + tol) {
                out.push(TrajectoryViolation::Longitudinal { index: i, accel });
            }
        }
        out
    }

    /// Every waypoint lies inside the track shrunk by `halfwidth`, measured
    /// against the centerline's interpolated widths.
    pub fn check_bounds(&self, centerline: &Centerline, halfwidth: f64) -> Vec<TrajectoryViolation> {
        let line = centerline.polyline();
        let n = centerline.len();
        let mut out = Vec::new();
        for (i, p) in self.points().iter().enumerate() {
            let pr = line.project(*p);
            let k = pr.segment;
            let (a, c, s0) = line.segment(k);
            let b = if line.is_closed() { (k + 1) % n } else { (k + 1).min(n - 1) };
            let t = (line.forward_distance(s0, pr.s) / a.dist(c)).clamp(0.0, 1.0);
            let wl = centerline.width_left()[k] * (1.0 - t) + centerline.width_left()[b] * t;
            let wr = centerline.width_right()[k] * (1.0 - t) + centerline.width_right()[b] * t;
            let excess = if pr.lateral >= 0.0 {
                pr.lateral - (wl - halfwidth)
            } else {
                -pr.lateral - (wr - halfwidth)
            };
            if excess > 0.0 {
                out.push(TrajectoryViolation::OutOfBounds { index: i, excess });
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        for (i, p) in self.points().iter().enumerate() {
            w.write_record([
                format!("{:.6}", self.cum_s()[i]),
                format!("{:.6}", p.x),
                format!("{:.6}", p.y),
                format!("{:.6}", self.heading[i]),
                format!("{:.6}", self.curvature[i]),
                format!("{:.6}", self.v_ref[i]),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
    }

    /// Reads the waypoint CSV; heading and arc length are rebuilt from the
    /// points.
    pub fn from_csv(bytes: &[u8], closed: bool) -> Result<Self, RacelineError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
        let headers = rdr.headers().map_err(|e| RacelineError::Csv(e.to_string()))?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| RacelineError::Csv(format!("missing column {name}")))
        };
        let (cx, cy, ck, cv) = (col("x_m")?, col("y_m")?, col("kappa_radpm")?, col("vx_mps")?);
        let (mut pts, mut kappa, mut v) = (Vec::new(), Vec::new(), Vec::new());
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| RacelineError::Csv(e.to_string()))?;
            let get = |c: usize| -> Result<f64, RacelineError> {
                let x: f64 = rec
                    .get(c)
                    .ok_or_else(|| RacelineError::Csv(format!("row {}: too few fields", row + 1)))?
                    .parse()
                    .map_err(|e| RacelineError::Csv(format!("row {}: {e}", row + 1)))?;
                if x.is_finite() {
                    Ok(x)
                } else {
                    Err(RacelineError::Csv(format!("row {}: non-finite value", row + 1)))
                }
            };
            pts.push(Point::new(get(cx)?, get(cy)?));
            kappa.push(get(ck)?);
            v.push(get(cv)?);
        }
        Self::from_parts(pts, closed, kappa, v)
    }
}

/// Catmull-Rom interpolation through `points`, resampled at uniform
/// `spacing`.
pub fn spline_resample(points: &[Point], closed: bool, spacing: f64) -> Result<Vec<Point>, RacelineError> {
    let n = points.len();
    if n < 3 {
        return Err(RacelineError::TooFewPoints(n));
    }
    let get = |i: isize| -> Point {
        if closed {
            points[i.rem_euclid(n as isize) as usize]
        } else if i < 0 {
            let (a, b) = (points[0], points[1]);
            Point::new(2.0 * a.x - b.x, 2.0 * a.y - b.y)
        } else if i >= n as isize {
            let (a, b) = (points[n - 1], points[n - 2]);
            Point::new(2.0 * a.x - b.x, 2.0 * a.y - b.y)
        } else {
            points[i as usize]
        }
    };
    const SUB: usize = 10;
    let segs = if closed { n } else { n - 1 };
    let mut dense = Vec::with_capacity(segs * SUB + 1);
    for i in 0..segs as isize {
        let (p0, p1, p2, p3) = (get(i - 1), get(i), get(i + 1), get(i + 2));
        for k in 0..SUB {
            let t = k as f64 / SUB as f64;
            let (t2, t3) = (t * t, t * t * t);
            let f = |a: f64, b: f64, c: f64, d: f64| {
                0.5 * (2.0 * b + (c - a) * t + (2.0 * a - 5.0 * b + 4.0 * c - d) * t2 + (3.0 * b - a - 3.0 * c + d) * t3)
            };
            dense.push(Point::new(f(p0.x, p1.x, p2.x, p3.x), f(p0.y, p1.y, p2.y, p3.y)));
        }
    }
    if !closed {
        dense.push(points[n - 1]);
    }
    let line = Polyline::new(dense, closed).ok_or(RacelineError::RepeatedPoint(0))?;
    let out = line.resample(spacing).ok_or(RacelineError::RepeatedPoint(0))?;
    Ok(out.points().to_vec())
}

/// Minimum-curvature path, resampled, with its minimum-time speed profile.
pub fn generate_raceline(
    centerline: &Centerline,
    params: &VehicleParams,
    config: &RacelineConfig,
) -> Result<RaceTrajectory, RacelineError> {
    let opts = MinCurvatureOptions {
        max_iterations: config.max_iterations,
        tolerance: config.tolerance,
    };
    let result = min_curvature_path(centerline, params.width, config.margin, &opts)?;
    if result.offsets.iter().any(|a| !a.is_finite()) {
        return Err(RacelineError::SolverFailed);
    }
    let path = offset_points(centerline.points(), &left_normals(centerline), &result.offsets);
    let closed = centerline.is_closed();
    let resampled = spline_resample(&path, closed, config.spacing)?;
    RaceTrajectory::from_path(resampled, closed, params)
}
