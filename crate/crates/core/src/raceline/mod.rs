//! Classical optimal trajectory: a minimum-curvature path inside the track
//! followed by a minimum-time speed profile.

pub mod curvature;
pub mod min_curvature;
pub mod qp;
pub mod speed;
mod trajectory;

pub use curvature::{menger_curvature, path_curvature};
pub use min_curvature::{min_curvature_path, MinCurvatureOptions, MinCurvatureResult};
pub use speed::{profile_time, speed_profile, speed_profile_from};
pub use trajectory::{generate_raceline, spline_resample, RaceTrajectory, RacelineConfig, TrajectoryViolation};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RacelineError {
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("points {0} and {0}+1 coincide")]
    RepeatedPoint(usize),
    #[error("segment {0} has non-positive length")]
    NonPositiveStep(usize),
    #[error("curvature has {0} entries but arc length has {1}")]
    LengthMismatch(usize, usize),
    #[error("track too narrow at point {index}: width {width:.3} m, need more than {required:.3} m")]
    Infeasible { index: usize, width: f64, required: f64 },
    #[error("QP solver produced a non-finite solution")]
    SolverFailed,
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("csv: {0}")]
    Csv(String),
}
