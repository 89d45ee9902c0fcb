//! Single-track vehicle model with linear tyres and a kinematic bicycle
//! fallback at low speed, integrated with explicit Euler at 100 Hz.
//!
//! State order follows the usual single-track convention: position, steering
//! angle, speed, yaw, yaw rate, slip angle at the centre of gravity.

use serde::{Deserialize, Serialize};

use crate::geometry::wrap_angle;

pub const G: f64 = 9.81;
/// Dynamics substep (s).
pub const DT: f64 = 0.01;
/// Substeps per planning period.
pub const SUBSTEPS: usize = 10;
/// Below (or at) this speed the kinematic model is used.
pub const V_SWITCH: f64 = 0.5;
/// Proportional speed-tracking gain (1/s).
pub const SPEED_GAIN: f64 = 10.0;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DynamicsError {
    #[error("state became non-finite: {0:?}")]
    NonFinite(VehicleState),
    #[error("invalid vehicle parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub steer: f64,
    pub speed: f64,
    pub yaw: f64,
    pub yaw_rate: f64,
    pub slip: f64,
}

impl VehicleState {
    pub fn at_pose(x: f64, y: f64, yaw: f64, speed: f64) -> Self {
        Self {
            x,
            y,
            yaw,
            speed,
            ..Default::default()
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.x, self.y, self.steer, self.speed, self.yaw, self.yaw_rate, self.slip]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// F1TENTH-scale defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    pub mass: f64,
    pub lf: f64,
    pub lr: f64,
    pub h_cg: f64,
    pub c_sf: f64,
    pub c_sr: f64,
    pub mu: f64,
    pub i_z: f64,
    pub steer_max: f64,
    pub steer_rate_max: f64,
    pub a_max: f64,
    pub v_max: f64,
    pub v_min: f64,
    /// Overall vehicle width, used for raceline margins.
    pub width: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 3.74,
            lf: 0.15875,
            lr: 0.17145,
            h_cg: 0.074,
            c_sf: 4.718,
            c_sr: 5.4562,
            mu: 1.0489,
            i_z: 0.04712,
            steer_max: 0.4189,
            steer_rate_max: 3.2,
            a_max: 9.51,
            v_max: 8.0,
            v_min: 1.0,
            width: 0.31,
        }
    }
}

impl VehicleParams {
    pub fn wheelbase(&self) -> f64 {
        self.lf + self.lr
    }

    /// Steady-state understeer gradient of the linear-tyre model under
    /// longitudinal acceleration `accel`.
    pub fn understeer_gradient(&self, accel: f64) -> f64 {
        let front = (G * self.lr - accel * self.h_cg).max(1e-6);
        let rear = (G * self.lf + accel * self.h_cg).max(1e-6);
        (self.lr / (self.c_sf * front) - self.lf / (self.c_sr * rear)) / self.mu
    }

    /// Wheelbase that maps path curvature to steady-state steering angle,
    /// `δ = atan(L_eff·κ)` with `L_eff = L + K·v²`, floored at the kinematic
    /// wheelbase when load transfer makes the car oversteer.
    pub fn effective_wheelbase(&self, speed: f64, accel: f64) -> f64 {
        (self.wheelbase() + self.understeer_gradient(accel) * speed * speed).max(self.wheelbase())
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let positive = [
            ("mass", self.mass),
            ("lf", self.lf),
            ("lr", self.lr),
            ("h_cg", self.h_cg),
            ("c_sf", self.c_sf),
            ("c_sr", self.c_sr),
            ("mu", self.mu),
            ("i_z", self.i_z),
            ("steer_max", self.steer_max),
            ("steer_rate_max", self.steer_rate_max),
            ("a_max", self.a_max),
            ("v_max", self.v_max),
            ("width", self.width),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(DynamicsError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.v_min >= 0.0) || self.v_min >= self.v_max {
            return Err(DynamicsError::InvalidParams(format!(
                "need 0 ≤ v_min < v_max, got {} and {}",
                self.v_min, self.v_max
            )));
        }
        Ok(())
    }
}

/// Steering angle and speed reference issued once per planning period.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlAction {
    pub steer: f64,
    pub speed: f64,
}

impl ControlAction {
    pub fn new(steer: f64, speed: f64) -> Self {
        Self { steer, speed }
    }

    pub fn clamped(self, params: &VehicleParams) -> Self {
        Self {
            steer: self.steer.clamp(-params.steer_max, params.steer_max),
            speed: self.speed.clamp(params.v_min, params.v_max),
        }
    }
}

/// Converts an angle/speed reference into the model's native inputs
/// (steering rate, acceleration).
pub fn actuator_inputs(state: &VehicleState, action: &ControlAction, params: &VehicleParams) -> (f64, f64) {
    let steer_rate = ((action.steer - state.steer) / DT).clamp(-params.steer_rate_max, params.steer_rate_max);
    let accel = (SPEED_GAIN * (action.speed - state.speed)).clamp(-params.a_max, params.a_max);
    (steer_rate, accel)
}

fn finish(mut next: VehicleState, params: &VehicleParams) -> Result<VehicleState, DynamicsError> {
    next.steer = next.steer.clamp(-params.steer_max, params.steer_max);
    next.speed = next.speed.max(0.0);
    next.yaw = wrap_angle(next.yaw);
    if next.is_finite() {
        Ok(next)
    } else {
        Err(DynamicsError::NonFinite(next))
    }
}

/// Time derivatives of (yaw rate, slip) for the linear-tyre single-track
/// model with load transfer through `h_cg`.
pub fn single_track_rates(state: &VehicleState, accel: f64, params: &VehicleParams) -> (f64, f64) {
    let p = params;
    let l = p.wheelbase();
    let v = state.speed;
    let front_load = G * p.lr - accel * p.h_cg;
    let rear_load = G * p.lf + accel * p.h_cg;
    let k = p.mu * p.mass / (p.i_z * l);

    let yaw_acc = -k / v * (p.lf * p.lf * p.c_sf * front_load + p.lr * p.lr * p.c_sr * rear_load) * state.yaw_rate
        + k * (p.lr * p.c_sr * rear_load - p.lf * p.c_sf * front_load) * state.slip
        + k * p.lf * p.c_sf * front_load * state.steer;

    let slip_rate = (p.mu / (v * v * l) * (p.c_sr * rear_load * p.lr - p.c_sf * front_load * p.lf) - 1.0)
        * state.yaw_rate
        - p.mu / (v * l) * (p.c_sr * rear_load + p.c_sf * front_load) * state.slip
        + p.mu / (v * l) * p.c_sf * front_load * state.steer;

    (yaw_acc, slip_rate)
}

/// One explicit-Euler step of the single-track model.
pub fn step_single_track(
    state: &VehicleState,
    steer_rate: f64,
    accel: f64,
    params: &VehicleParams,
    dt: f64,
) -> Result<VehicleState, DynamicsError> {
    let s = state;
    let (yaw_acc, slip_rate) = single_track_rates(s, accel, params);
    let heading = s.yaw + s.slip;
    let next = VehicleState {
        x: s.x + dt * s.speed * heading.cos(),
        y: s.y + dt * s.speed * heading.sin(),
        steer: s.steer + dt * steer_rate,
        speed: s.speed + dt * accel,
        yaw: s.yaw + dt * s.yaw_rate,
        yaw_rate: s.yaw_rate + dt * yaw_acc,
        slip: s.slip + dt * slip_rate,
    };
    finish(next, params)
}

/// One explicit-Euler step of the slip-free kinematic bicycle.
pub fn step_kinematic(
    state: &VehicleState,
    steer_rate: f64,
    accel: f64,
    params: &VehicleParams,
    dt: f64,
) -> Result<VehicleState, DynamicsError> {
    let s = state;
    let l = params.wheelbase();
    let yaw_rate = s.speed * s.steer.tan() / l;
    let mut next = VehicleState {
        x: s.x + dt * s.speed * s.yaw.cos(),
        y: s.y + dt * s.speed * s.yaw.sin(),
        steer: (s.steer + dt * steer_rate).clamp(-params.steer_max, params.steer_max),
        speed: (s.speed + dt * accel).max(0.0),
        yaw: s.yaw + dt * yaw_rate,
        yaw_rate: 0.0,
        slip: 0.0,
    };
    next.yaw_rate = next.speed * next.steer.tan() / l;
    finish(next, params)
}

/// One 0.01 s substep: actuator model then the speed-appropriate dynamics.
pub fn substep(state: &VehicleState, action: &ControlAction, params: &VehicleParams) -> Result<VehicleState, DynamicsError> {
    let (steer_rate, accel) = actuator_inputs(state, action, params);
    if state.speed > V_SWITCH {
        step_single_track(state, steer_rate, accel, params, DT)
    } else {
        step_kinematic(state, steer_rate, accel, params, DT)
    }
}

/// Applies one action for `n_substeps` dynamics substeps.
pub fn advance(
    state: &VehicleState,
    action: &ControlAction,
    params: &VehicleParams,
    n_substeps: usize,
) -> Result<VehicleState, DynamicsError> {
    let mut s = *state;
    for _ in 0..n_substeps {
        s = substep(&s, action, params)?;
    }
    Ok(s)
}
