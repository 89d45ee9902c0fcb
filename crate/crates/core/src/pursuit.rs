//! Pure pursuit tracking of a [`RaceTrajectory`] from the true pose.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{actuator_inputs, ControlAction, VehicleParams, VehicleState};
use crate::geometry::Point;
use crate::raceline::RaceTrajectory;
use crate::track::PROJECTION_WINDOW;

#[derive(Debug, Error, PartialEq)]
pub enum PursuitError {
    #[error("trajectory has no waypoints")]
    EmptyTrajectory,
    #[error("lookahead point coincides with the vehicle position")]
    ZeroLookahead,
    #[error("invalid pursuit config: {0}")]
    InvalidConfig(String),
}

/// Lookahead law `l_d = clamp(base + gain·v, min, max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PursuitConfig {
    pub lookahead_base: f64,
    pub lookahead_gain: f64,
    pub lookahead_min: f64,
    pub lookahead_max: f64,
}

impl Default for PursuitConfig {
    fn default() -> Self {
        Self {
            lookahead_base: 0.8,
            lookahead_gain: 0.2,
            lookahead_min: 0.5,
            lookahead_max: 2.5,
        }
    }
}

impl PursuitConfig {
    pub fn validate(&self) -> Result<(), PursuitError> {
        if !(self.lookahead_min > 0.0 && self.lookahead_min <= self.lookahead_max) {
            return Err(PursuitError::InvalidConfig(format!(
                "need 0 < lookahead_min ≤ lookahead_max, got {} and {}",
                self.lookahead_min, self.lookahead_max
            )));
        }
        if self.lookahead_base < 0.0 || self.lookahead_gain < 0.0 {
            return Err(PursuitError::InvalidConfig("lookahead base and gain must be non-negative".into()));
        }
        Ok(())
    }

    pub fn lookahead(&self, speed: f64) -> f64 {
        (self.lookahead_base + self.lookahead_gain * speed).clamp(self.lookahead_min, self.lookahead_max)
    }
}

/// First waypoint at or beyond `s` (`strict`: strictly beyond).
fn waypoint_after(traj: &RaceTrajectory, s: f64, strict: bool) -> usize {
    let line = traj.polyline();
    let n = traj.len();
    let s = line.normalize_s(s);
    let k = line.segment_at(s);
    let next = if !strict && s == traj.cum_s()[k] { k } else { k + 1 };
    if traj.is_closed() {
        next % n
    } else {
        next.min(n - 1)
    }
}

/// Trajectory point at arc length `s + l_d` and the first waypoint at or
/// beyond `s`.
pub fn find_lookahead(traj: &RaceTrajectory, s: f64, l_d: f64) -> Result<(Point, usize), PursuitError> {
    if traj.is_empty() {
        return Err(PursuitError::EmptyTrajectory);
    }
    let point = traj.polyline().point_at(s + l_d);
    Ok((point, waypoint_after(traj, s, false)))
}

/// Pure pursuit law `δ = atan(2L·sin α / l)`, clamped to `±steer_max`.
pub fn pursuit_steering(
    x: f64,
    y: f64,
    yaw: f64,
    target: Point,
    wheelbase: f64,
    steer_max: f64,
) -> Result<f64, PursuitError> {
    let (dx, dy) = (target.x - x, target.y - y);
    let dist = dx.hypot(dy);
    if dist < 1e-9 {
        return Err(PursuitError::ZeroLookahead);
    }
    let lx = yaw.cos() * dx + yaw.sin() * dy;
    let ly = -yaw.sin() * dx + yaw.cos() * dy;
    let alpha = ly.atan2(lx);
    Ok((2.0 * wheelbase * alpha.sin() / dist).atan().clamp(-steer_max, steer_max))
}

/// Classic action given the vehicle's arc-length position `s` on the
/// trajectory.
pub fn classic_action_at(
    traj: &RaceTrajectory,
    state: &VehicleState,
    s: f64,
    config: &PursuitConfig,
    params: &VehicleParams,
) -> Result<ControlAction, PursuitError> {
    let speed = traj.v_ref()[waypoint_after(traj, s, true)].clamp(params.v_min, params.v_max);
    let l_d = config.lookahead(state.speed);
    let (target, _) = find_lookahead(traj, s, l_d)?;
    let (_, accel) = actuator_inputs(state, &ControlAction::new(state.steer, speed), params);
    let wheelbase = params.effective_wheelbase(state.speed, accel);
    let course = state.yaw + state.slip;
    let steer = pursuit_steering(state.x, state.y, course, target, wheelbase, params.steer_max)?;
    Ok(ControlAction::new(steer, speed))
}

/// Classic action from a global projection of the pose.
pub fn classic_action(
    traj: &RaceTrajectory,
    state: &VehicleState,
    config: &PursuitConfig,
    params: &VehicleParams,
) -> Result<ControlAction, PursuitError> {
    if traj.is_empty() {
        return Err(PursuitError::EmptyTrajectory);
    }
    let s = traj.polyline().project(Point::new(state.x, state.y)).s;
    classic_action_at(traj, state, s, config, params)
}

/// Pure pursuit with a running arc-length estimate, so each projection only
/// searches near the previous one.
#[derive(Debug, Clone)]
pub struct ClassicPlanner {
    trajectory: RaceTrajectory,
    config: PursuitConfig,
    params: VehicleParams,
    last_s: Option<f64>,
}

impl ClassicPlanner {
    pub fn new(trajectory: RaceTrajectory, config: PursuitConfig, params: VehicleParams) -> Result<Self, PursuitError> {
        config.validate()?;
        if trajectory.is_empty() {
            return Err(PursuitError::EmptyTrajectory);
        }
        Ok(Self {
            trajectory,
            config,
            params,
            last_s: None,
        })
    }

    pub fn trajectory(&self) -> &RaceTrajectory {
        &self.trajectory
    }

    pub fn config(&self) -> &PursuitConfig {
        &self.config
    }

    pub fn reset(&mut self) {
        self.last_s = None;
    }

    /// Arc length of the pose on the trajectory.
    pub fn locate(&mut self, state: &VehicleState) -> f64 {
        let p = Point::new(state.x, state.y);
        let line = self.trajectory.polyline();
        let pr = match self.last_s {
            Some(hint) => line.project_near(p, hint, PROJECTION_WINDOW),
            None => line.project(p),
        };
        self.last_s = Some(pr.s);
        pr.s
    }

    pub fn act(&mut self, state: &VehicleState) -> Result<ControlAction, PursuitError> {
        let s = self.locate(state);
        classic_action_at(&self.trajectory, state, s, &self.config, &self.params)
    }

    /// Reference speed at arc length `s` (linear between waypoints).
    pub fn speed_at(&self, s: f64) -> f64 {
        let line = self.trajectory.polyline();
        let s = line.normalize_s(s);
        let k = line.segment_at(s);
        let (a, b, s0) = line.segment(k);
        let j = (k + 1) % self.trajectory.len();
        let t = ((s - s0) / a.dist(b)).clamp(0.0, 1.0);
        let v = self.trajectory.v_ref();
        v[k] * (1.0 - t) + v[j] * t
    }
}
