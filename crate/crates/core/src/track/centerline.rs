use crate::geometry::{wrap_angle, Point, Polyline};

use super::TrackError;

/// Search half-window (m) around the previous arc length when tracking
/// progress, and the maximum admissible distance from the centerline.
pub const PROJECTION_WINDOW: f64 = 5.0;

/// Where a pose sits relative to the centerline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseProjection {
    pub s: f64,
    /// Signed cross-track distance, left of the direction of travel positive.
    pub d_c: f64,
    /// Heading error in (−π, π].
    pub psi: f64,
    /// s / total_length
    pub progress: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Centerline {
    line: Polyline,
    width_left: Vec<f64>,
    width_right: Vec<f64>,
}

const CSV_HEADER: [&str; 4] = ["x_m", "y_m", "w_tr_left_m", "w_tr_right_m"];

impl Centerline {
    pub fn new(
        points: Vec<Point>,
        width_left: Vec<f64>,
        width_right: Vec<f64>,
        closed: bool,
    ) -> Result<Self, TrackError> {
        if points.len() != width_left.len() || points.len() != width_right.len() {
            return Err(TrackError::InvalidCenterline("width arrays differ in length from points".into()));
        }
        if width_left.iter().chain(&width_right).any(|w| !w.is_finite() || *w < 0.0) {
            return Err(TrackError::InvalidCenterline("widths must be finite and non-negative".into()));
        }
        let line = Polyline::new(points, closed)
            .ok_or_else(|| TrackError::InvalidCenterline("needs ≥2 distinct finite points".into()))?;
        Ok(Self {
            line,
            width_left,
            width_right,
        })
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

    pub fn total_length(&self) -> f64 {
        self.line.total_length()
    }

    pub fn is_closed(&self) -> bool {
        self.line.is_closed()
    }

    pub fn width_left(&self) -> &[f64] {
        &self.width_left
    }

    pub fn width_right(&self) -> &[f64] {
        &self.width_right
    }

    pub fn len(&self) -> usize {
        self.line.len()
    }

    pub fn is_empty(&self) -> bool {
        self.line.is_empty()
    }

    /// Tangent heading at vertex `i`.
    pub fn heading(&self, i: usize) -> f64 {
        self.line.vertex_heading(i)
    }

    /// Projects a pose. `hint_s` restricts the search to ±5 m of a previous
    /// arc length so that progress does not jump between nearby strands.
    pub fn project_pose(&self, x: f64, y: f64, yaw: f64, hint_s: Option<f64>) -> Result<PoseProjection, TrackError> {
        let p = Point::new(x, y);
        let pr = match hint_s {
            Some(h) => self.line.project_near(p, h, PROJECTION_WINDOW),
            None => self.line.project(p),
        };
        if !(pr.distance <= PROJECTION_WINDOW) {
            return Err(TrackError::OffTrack {
                x,
                y,
                distance: pr.distance,
            });
        }
        let psi = wrap_angle(yaw - self.line.heading_at(pr.s));
        Ok(PoseProjection {
            s: pr.s,
            d_c: pr.lateral,
            psi,
            progress: pr.s / self.total_length(),
        })
    }

    /// Parses `x_m,y_m,w_tr_left_m,w_tr_right_m` rows. A leading `#` on the
    /// header is tolerated, columns are matched by name, and a final row that
    /// repeats the first point is dropped. The result is a closed loop.
    pub fn from_csv(bytes: &[u8]) -> Result<Self, TrackError> {
        Self::from_csv_with(bytes, true)
    }

    pub fn from_csv_with(bytes: &[u8], closed: bool) -> Result<Self, TrackError> {
        let text = std::str::from_utf8(bytes).map_err(|e| TrackError::Csv(e.to_string()))?;
        let text = text.trim_start().trim_start_matches('#');
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| TrackError::Csv(e.to_string()))?.clone();
        let mut cols = [0usize; 4];
        for (slot, name) in cols.iter_mut().zip(CSV_HEADER) {
            *slot = headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| TrackError::Csv(format!("missing column {name}")))?;
        }
        let mut pts = Vec::new();
        let mut wl = Vec::new();
        let mut wr = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| TrackError::Csv(e.to_string()))?;
            let mut vals = [0.0; 4];
            for (v, &c) in vals.iter_mut().zip(&cols) {
                let field = rec
                    .get(c)
                    .ok_or_else(|| TrackError::Csv(format!("row {}: too few fields", row + 1)))?;
                *v = field
                    .parse::<f64>()
                    .map_err(|e| TrackError::Csv(format!("row {}: {e}", row + 1)))?;
                if !v.is_finite() {
                    return Err(TrackError::Csv(format!("row {}: non-finite value", row + 1)));
                }
            }
            pts.push(Point::new(vals[0], vals[1]));
            wl.push(vals[2]);
            wr.push(vals[3]);
        }
        if closed && pts.len() > 1 && pts.first() == pts.last() {
            pts.pop();
            wl.pop();
            wr.pop();
        }
        if pts.len() < 4 {
            return Err(TrackError::Csv(format!("need at least 4 points, got {}", pts.len())));
        }
        Self::new(pts, wl, wr, closed)
    }

    pub fn to_csv(&self) -> String {
        let mut out = CSV_HEADER.join(",");
        out.push('\n');
        for ((p, l), r) in self.points().iter().zip(&self.width_left).zip(&self.width_right) {
            out.push_str(&format!("{},{},{},{}\n", p.x, p.y, l, r));
        }
        out
    }
}
