use crate::geometry::Point;

use super::RacelineError;

/// Signed curvature of the circle through three points (positive for a
/// left turn).
pub fn menger_curvature(a: Point, b: Point, c: Point) -> f64 {
    let cross = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x);
    let denom = a.dist(b) * b.dist(c) * c.dist(a);
    if denom == 0.0 {
        0.0
    } else {
        2.0 * cross / denom
    }
}

/// Discrete curvature at every point from the circumscribed circle of each
/// point and its neighbours. Open paths copy the neighbouring value at the
/// two endpoints.
pub fn path_curvature(points: &[Point], closed: bool) -> Result<Vec<f64>, RacelineError> {
    let n = points.len();
    if n < 3 {
        return Err(RacelineError::TooFewPoints(n));
    }
    let seg_count = if closed { n } else { n - 1 };
    for i in 0..seg_count {
        if points[i].dist(points[(i + 1) % n]) == 0.0 {
            return Err(RacelineError::RepeatedPoint(i));
        }
    }
    let mut kappa = vec![0.0; n];
    for i in 0..n {
        if !closed && (i == 0 || i == n - 1) {
            continue;
        }
        let a = points[(i + n - 1) % n];
        let c = points[(i + 1) % n];
        kappa[i] = menger_curvature(a, points[i], c);
    }
    if !closed {
        kappa[0] = kappa[1];
        kappa[n - 1] = kappa[n - 2];
    }
    Ok(kappa)
}
