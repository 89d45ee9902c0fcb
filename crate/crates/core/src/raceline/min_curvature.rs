//! Minimum-curvature path: lateral offsets `α_i` along the centerline's
//! left normals minimising Σκ², with κ linearised around the current path
//! and the resulting box-constrained QP re-solved until the offsets settle.

use log::warn;
use nalgebra::{DMatrix, DVector};

use super::curvature::menger_curvature;
use super::qp::solve_box_qp;
use super::RacelineError;
use crate::geometry::Point;
use crate::track::Centerline;

#[derive(Debug, Clone, PartialEq)]
pub struct MinCurvatureResult {
    pub offsets: Vec<f64>,
    /// Σκ² of the centerline followed by each accepted iterate.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinCurvatureOptions {
    pub max_iterations: usize,
    /// Stop once the largest offset change falls below this (m).
    pub tolerance: f64,
}

impl Default for MinCurvatureOptions {
    fn default() -> Self {
        Self {
            max_iterations: 5,
            tolerance: 1e-3,
        }
    }
}

/// Left unit normals from the centerline's vertex headings.
pub fn left_normals(centerline: &Centerline) -> Vec<Point> {
    (0..centerline.len())
        .map(|i| {
            let h = centerline.heading(i);
            Point::new(-h.sin(), h.cos())
        })
        .collect()
}

pub fn offset_points(base: &[Point], normals: &[Point], alpha: &[f64]) -> Vec<Point> {
    base.iter()
        .zip(normals)
        .zip(alpha)
        .map(|((p, n), a)| Point::new(p.x + a * n.x, p.y + a * n.y))
        .collect()
}

/// Indices that carry a curvature term (all points, or interior ones for an
/// open path).
fn curvature_rows(n: usize, closed: bool) -> Vec<usize> {
    if closed {
        (0..n).collect()
    } else {
        (1..n - 1).collect()
    }
}

fn curvature_at(pts: &[Point], i: usize) -> f64 {
    let n = pts.len();
    menger_curvature(pts[(i + n - 1) % n], pts[i], pts[(i + 1) % n])
}

/// Σκ² over the rows that carry curvature.
pub fn curvature_objective(pts: &[Point], closed: bool) -> f64 {
    curvature_rows(pts.len(), closed)
        .into_iter()
        .map(|i| curvature_at(pts, i).powi(2))
        .sum()
}

/// Offset bounds `[−(w_r − w/2 − margin), w_l − w/2 − margin]`.
pub fn offset_bounds(
    centerline: &Centerline,
    vehicle_width: f64,
    margin: f64,
) -> Result<(Vec<f64>, Vec<f64>), RacelineError> {
    let shrink = vehicle_width / 2.0 + margin;
    let lo: Vec<f64> = centerline.width_right().iter().map(|w| -(w - shrink)).collect();
    let hi: Vec<f64> = centerline.width_left().iter().map(|w| w - shrink).collect();
    if let Some(i) = (0..lo.len()).find(|&i| lo[i] > hi[i]) {
        return Err(RacelineError::Infeasible {
            index: i,
            width: centerline.width_left()[i] + centerline.width_right()[i],
            required: 2.0 * shrink,
        });
    }
    Ok((lo, hi))
}

pub fn min_curvature_path(
    centerline: &Centerline,
    vehicle_width: f64,
    margin: f64,
    options: &MinCurvatureOptions,
) -> Result<MinCurvatureResult, RacelineError> {
    let (lo, hi) = offset_bounds(centerline, vehicle_width, margin)?;
    optimise_offsets(centerline.points(), &left_normals(centerline), &lo, &hi, centerline.is_closed(), options)
}

/// Core iteration on explicit base points, normals and bounds.
pub fn optimise_offsets(
    base: &[Point],
    normals: &[Point],
    lo: &[f64],
    hi: &[f64],
    closed: bool,
    options: &MinCurvatureOptions,
) -> Result<MinCurvatureResult, RacelineError> {
    let n = base.len();
    if n < 3 {
        return Err(RacelineError::TooFewPoints(n));
    }
    let rows = curvature_rows(n, closed);
    let mut alpha: Vec<f64> = (0..n).map(|i| 0.0f64.clamp(lo[i], hi[i])).collect();
    let mut current = curvature_objective(&offset_points(base, normals, &alpha), closed);
    let mut history = vec![current];
    let mut converged = false;
    let mut iterations = 0;
    let h_fd = 1e-6;

    for _ in 0..options.max_iterations {
        iterations += 1;
        let pts = offset_points(base, normals, &alpha);
        // Jacobian of κ_i with respect to α_{i-1}, α_i, α_{i+1}
        let mut jac = DMatrix::<f64>::zeros(rows.len(), n);
        let mut resid = DVector::<f64>::zeros(rows.len());
        for (r, &i) in rows.iter().enumerate() {
            let k0 = curvature_at(&pts, i);
            for j in [(i + n - 1) % n, i, (i + 1) % n] {
                let mut plus = pts.clone();
                let mut minus = pts.clone();
                plus[j] = Point::new(pts[j].x + h_fd * normals[j].x, pts[j].y + h_fd * normals[j].y);
                minus[j] = Point::new(pts[j].x - h_fd * normals[j].x, pts[j].y - h_fd * normals[j].y);
                jac[(r, j)] = (curvature_at(&plus, i) - curvature_at(&minus, i)) / (2.0 * h_fd);
            }
            let lin: f64 = (0..3)
                .map(|d| {
                    let j = (i + n - 1 + d) % n;
                    jac[(r, j)] * alpha[j]
                })
                .sum();
            resid[r] = k0 - lin;
        }
        let h = jac.transpose() * &jac;
        let g = jac.transpose() * &resid;
        let sol = solve_box_qp(&h, &g, lo, hi, &alpha);

        // backtrack along the QP step until Σκ² does not increase
        let mut accepted = None;
        let mut t = 1.0;
        for _ in 0..12 {
            let trial: Vec<f64> = alpha.iter().zip(&sol.x).map(|(a, b)| a + t * (b - a)).collect();
            let obj = curvature_objective(&offset_points(base, normals, &trial), closed);
            if obj <= current {
                accepted = Some((trial, obj));
                break;
            }
            t *= 0.5;
        }
        let Some((next, obj)) = accepted else {
            converged = true;
            break;
        };
        let step = alpha.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        alpha = next;
        current = obj;
        history.push(obj);
        if step < options.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!(
            "min-curvature offsets still moving after {} re-linearisations (Σκ² = {current:.4})",
            options.max_iterations
        );
    }
    Ok(MinCurvatureResult {
        offsets: alpha,
        objective_history: history,
        iterations,
        converged,
    })
}
