//! Racing MDP: stacked LiDAR observations, scaled actions, one 0.1 s
//! planning period per step, trajectory-aided or baseline rewards.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{advance, ControlAction, DynamicsError, VehicleParams, VehicleState, DT, SUBSTEPS};
use crate::lidar::{scan, LidarConfig, LidarError};
use crate::pursuit::{ClassicPlanner, PursuitConfig, PursuitError};
use crate::raceline::RaceTrajectory;
use crate::track::{Centerline, TrackError, TrackMap};

/// Length of one planning period (s).
pub const PLANNING_PERIOD: f64 = DT * SUBSTEPS as f64;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("start pose at s = {0:.2} m collides with the track boundary")]
    StartInCollision(f64),
    #[error("episode is over; call reset first")]
    EpisodeOver,
    #[error("action has {0} components, expected 2")]
    ActionSize(usize),
    #[error(transparent)]
    Lidar(#[from] LidarError),
    #[error(transparent)]
    Pursuit(#[from] PursuitError),
    #[error(transparent)]
    Track(#[from] TrackError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    Tal,
    Baseline,
}

impl RewardKind {
    pub fn name(self) -> &'static str {
        match self {
            RewardKind::Tal => "tal",
            RewardKind::Baseline => "baseline",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "tal" => Some(RewardKind::Tal),
            "baseline" => Some(RewardKind::Baseline),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub kind: RewardKind,
    pub shaping_scale: f64,
    pub crash_reward: f64,
    pub lap_reward: f64,
    /// Compare TAL actions in normalised rather than physical units.
    pub normalized_units: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            kind: RewardKind::Tal,
            shaping_scale: 0.2,
            crash_reward: -1.0,
            lap_reward: 1.0,
            normalized_units: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub reward: RewardConfig,
    /// Uniformly random start along the centerline (training) instead of
    /// s = 0 (evaluation).
    pub random_start: bool,
    /// Simulated time allowed beyond one lap at minimum speed (s).
    pub budget_slack: f64,
    pub lidar: LidarConfig,
    pub pursuit: PursuitConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            reward: RewardConfig::default(),
            random_start: false,
            budget_slack: 20.0,
            lidar: LidarConfig::default(),
            pursuit: PursuitConfig::default(),
        }
    }
}

/// Maps a normalised action in [−1, 1]² to steering and speed references.
pub fn scale_action(a: [f64; 2], params: &VehicleParams) -> ControlAction {
    let a1 = a[0].clamp(-1.0, 1.0);
    let a2 = a[1].clamp(-1.0, 1.0);
    ControlAction::new(
        a1 * params.steer_max,
        params.v_min + (a2 + 1.0) / 2.0 * (params.v_max - params.v_min),
    )
}

/// Inverse of [`scale_action`].
pub fn unscale_action(action: &ControlAction, params: &VehicleParams) -> [f64; 2] {
    [
        (action.steer / params.steer_max).clamp(-1.0, 1.0),
        (2.0 * (action.speed - params.v_min) / (params.v_max - params.v_min) - 1.0).clamp(-1.0, 1.0),
    ]
}

/// Trajectory-aided reward `scale·max(0, 1 − |Δv| − |Δδ|)`.
pub fn reward_tal(agent: &ControlAction, classic: &ControlAction, params: &VehicleParams, config: &RewardConfig) -> f64 {
    let (dv, dd) = if config.normalized_units {
        (
            (agent.speed - classic.speed).abs() / (params.v_max - params.v_min),
            (agent.steer - classic.steer).abs() / params.steer_max,
        )
    } else {
        ((agent.speed - classic.speed).abs(), (agent.steer - classic.steer).abs())
    };
    config.shaping_scale * (1.0 - dv - dd).max(0.0)
}

/// Baseline reward `(v/v_max)·cos ψ − |d_c|`.
pub fn reward_baseline(speed: f64, psi: f64, d_c: f64, v_max: f64) -> f64 {
    speed / v_max * psi.cos() - d_c.abs()
}

/// Accumulates signed arc-length progress and reports lap completion.
#[derive(Debug, Clone, PartialEq)]
pub struct LapTracker {
    length: f64,
    start_s: f64,
    last_rel: f64,
    traversed: f64,
}

impl LapTracker {
    pub fn new(length: f64, start_s: f64) -> Self {
        Self {
            length,
            start_s,
            last_rel: 0.0,
            traversed: 0.0,
        }
    }

    /// Signed distance travelled since the start.
    pub fn traversed(&self) -> f64 {
        self.traversed
    }

    /// Fraction of a lap covered, clamped to [0, 1].
    pub fn progress(&self) -> f64 {
        (self.traversed / self.length).clamp(0.0, 1.0)
    }

    /// Feeds a new arc-length position; true once the car has covered a full
    /// lap and crosses its start line going forward.
    pub fn update(&mut self, s: f64) -> bool {
        let rel = (s - self.start_s).rem_euclid(self.length);
        let mut delta = rel - self.last_rel;
        if delta > self.length / 2.0 {
            delta -= self.length;
        } else if delta < -self.length / 2.0 {
            delta += self.length;
        }
        let crossed = delta > 0.0 && rel < self.last_rel;
        self.last_rel = rel;
        self.traversed += delta;
        crossed && self.traversed >= self.length - 1e-9
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub progress: f64,
    /// Simulated time since reset.
    pub time: f64,
    pub lap_time: Option<f64>,
    pub crashed: bool,
    pub lap_complete: bool,
    /// Step budget exhausted without crash or lap.
    pub truncated: bool,
    pub state: VehicleState,
    pub agent_action: ControlAction,
    pub classic_action: ControlAction,
    pub s: f64,
    pub d_c: f64,
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// One row of an episode trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub time_s: f64,
    pub x_m: f64,
    pub y_m: f64,
    pub yaw_rad: f64,
    pub v_mps: f64,
    pub steer_rad: f64,
    pub slip_rad: f64,
    pub s_m: f64,
    pub d_c_m: f64,
    pub psi_rad: f64,
    pub agent_steer_rad: f64,
    pub agent_speed_mps: f64,
    pub classic_steer_rad: f64,
    pub classic_speed_mps: f64,
    pub reward: f64,
}

pub fn write_trace<W: Write>(rows: &[TraceRow], out: W) -> Result<(), EnvError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| std::io::Error::other(e.to_string()))?;
    }
    if rows.is_empty() {
        w.write_record([
            "time_s",
            "x_m",
            "y_m",
            "yaw_rad",
            "v_mps",
            "steer_rad",
            "slip_rad",
            "s_m",
            "d_c_m",
            "psi_rad",
            "agent_steer_rad",
            "agent_speed_mps",
            "classic_steer_rad",
            "classic_speed_mps",
            "reward",
        ])
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(bytes: &[u8]) -> Result<Vec<TraceRow>, EnvError> {
    let mut r = csv::Reader::from_reader(bytes);
    r.deserialize()
        .map(|row| row.map_err(|e| EnvError::Io(std::io::Error::other(e.to_string()))))
        .collect()
}

/// The racing environment.
#[derive(Debug, Clone)]
pub struct RacingEnv {
    map: TrackMap,
    centerline: Centerline,
    planner: ClassicPlanner,
    params: VehicleParams,
    config: EnvConfig,
    rng: ChaCha8Rng,
    state: VehicleState,
    prev_scan: Vec<f64>,
    scan: Vec<f64>,
    steps: usize,
    max_steps: usize,
    tracker: LapTracker,
    last_s: f64,
    classic: ControlAction,
    done: bool,
    record: bool,
    trace: Vec<TraceRow>,
}

impl RacingEnv {
    pub fn new(
        map: TrackMap,
        centerline: Centerline,
        raceline: RaceTrajectory,
        params: VehicleParams,
        config: EnvConfig,
        seed: u64,
    ) -> Result<Self, EnvError> {
        params
            .validate()
            .map_err(|e| EnvError::InvalidConfig(e.to_string()))?;
        if config.lidar.n_beams < 2 {
            return Err(LidarError::TooFewBeams(config.lidar.n_beams).into());
        }
        let planner = ClassicPlanner::new(raceline, config.pursuit, params)?;
        let length = centerline.total_length();
        let max_steps = ((length / params.v_min + config.budget_slack) / PLANNING_PERIOD).ceil() as usize;
        let n = config.lidar.n_beams;
        Ok(Self {
            map,
            centerline,
            planner,
            params,
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: VehicleState::default(),
            prev_scan: vec![0.0; n],
            scan: vec![0.0; n],
            steps: 0,
            max_steps,
            tracker: LapTracker::new(length, 0.0),
            last_s: 0.0,
            classic: ControlAction::default(),
            done: true,
            record: false,
            trace: Vec::new(),
        })
    }

    pub fn observation_size(&self) -> usize {
        2 * self.config.lidar.n_beams
    }

    pub const ACTION_SIZE: usize = 2;

    pub fn params(&self) -> &VehicleParams {
        &self.params
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn map(&self) -> &TrackMap {
        &self.map
    }

    pub fn centerline(&self) -> &Centerline {
        &self.centerline
    }

    pub fn raceline(&self) -> &RaceTrajectory {
        self.planner.trajectory()
    }

    pub fn state(&self) -> &VehicleState {
        &self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn progress(&self) -> f64 {
        self.tracker.progress()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Classic planner action for the current state.
    pub fn classic_action(&self) -> ControlAction {
        self.classic
    }

    /// Record per-step trace rows from the next reset on.
    pub fn set_recording(&mut self, on: bool) {
        self.record = on;
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    pub fn set_random_start(&mut self, on: bool) {
        self.config.random_start = on;
    }

    pub fn set_reward_kind(&mut self, kind: RewardKind) {
        self.config.reward.kind = kind;
    }

    fn observation(&self) -> Vec<f64> {
        let r = self.config.lidar.max_range;
        self.prev_scan.iter().chain(&self.scan).map(|d| d / r).collect()
    }

    fn take_scan(&mut self) -> Result<Vec<f64>, EnvError> {
        Ok(scan(&self.map, self.state.x, self.state.y, self.state.yaw, &self.config.lidar, &mut self.rng)?.beams)
    }

    /// Starts an episode at `s = 0`, or at a random `s` when random starts
    /// are enabled.
    pub fn reset(&mut self) -> Result<Vec<f64>, EnvError> {
        let s = if self.config.random_start {
            self.rng.gen_range(0.0..self.centerline.total_length())
        } else {
            0.0
        };
        self.reset_at(s)
    }

    /// Starts an episode on the centerline at arc length `s`, aligned with
    /// the track, at minimum speed.
    pub fn reset_at(&mut self, s: f64) -> Result<Vec<f64>, EnvError> {
        let line = self.centerline.polyline();
        let s = line.normalize_s(s);
        let p = line.point_at(s);
        let yaw = line.heading_at(s);
        if self.map.collision(p.x, p.y, self.params.width / 2.0) {
            return Err(EnvError::StartInCollision(s));
        }
        self.state = VehicleState::at_pose(p.x, p.y, yaw, self.params.v_min);
        self.steps = 0;
        self.tracker = LapTracker::new(self.centerline.total_length(), s);
        self.last_s = s;
        self.scan = self.take_scan()?;
        self.prev_scan = self.scan.clone();
        self.planner.reset();
        self.classic = self.planner.act(&self.state)?;
        self.done = false;
        self.trace.clear();
        Ok(self.observation())
    }

    /// Steps with a normalised action in [−1, 1]².
    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome, EnvError> {
        if action.len() != 2 {
            return Err(EnvError::ActionSize(action.len()));
        }
        self.step_control(scale_action([action[0], action[1]], &self.params))
    }

    /// Steps with a physical steering/speed reference.
    pub fn step_control(&mut self, agent: ControlAction) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        let agent = agent.clamped(&self.params);
        let classic = self.classic;
        self.steps += 1;
        let time = self.steps as f64 * PLANNING_PERIOD;

        let mut crashed = false;
        match advance(&self.state, &agent, &self.params, SUBSTEPS) {
            Ok(next) => self.state = next,
            Err(e) => {
                log::warn!("dynamics failure treated as a crash: {e}");
                crashed = true;
            }
        }
        crashed |= self.map.collision(self.state.x, self.state.y, self.params.width / 2.0);
        let proj = if crashed {
            None
        } else {
            match self.centerline.project_pose(self.state.x, self.state.y, self.state.yaw, Some(self.last_s)) {
                Ok(p) => Some(p),
                Err(TrackError::OffTrack { .. }) => {
                    crashed = true;
                    None
                }
                Err(e) => return Err(e.into()),
            }
        };
        let mut lap_complete = false;
        let (s, d_c, psi) = match proj {
            Some(p) => {
                lap_complete = self.tracker.update(p.s);
                self.last_s = p.s;
                (p.s, p.d_c, p.psi)
            }
            None => (self.last_s, f64::NAN, f64::NAN),
        };

        self.prev_scan = std::mem::take(&mut self.scan);
        self.scan = if crashed { self.prev_scan.clone() } else { self.take_scan()? };

        let shaped = match self.config.reward.kind {
            RewardKind::Tal => reward_tal(&agent, &classic, &self.params, &self.config.reward),
            RewardKind::Baseline => {
                if crashed {
                    0.0
                } else {
                    reward_baseline(self.state.speed, psi, d_c, self.params.v_max)
                }
            }
        };
        let reward = if crashed {
            self.config.reward.crash_reward
        } else if lap_complete {
            self.config.reward.lap_reward
        } else {
            shaped
        };
        let truncated = !crashed && !lap_complete && self.steps >= self.max_steps;
        self.done = crashed || lap_complete || truncated;
        if !self.done {
            self.classic = self.planner.act(&self.state)?;
        }
        if self.record {
            self.trace.push(TraceRow {
                time_s: time,
                x_m: self.state.x,
                y_m: self.state.y,
                yaw_rad: self.state.yaw,
                v_mps: self.state.speed,
                steer_rad: self.state.steer,
                slip_rad: self.state.slip,
                s_m: s,
                d_c_m: d_c,
                psi_rad: psi,
                agent_steer_rad: agent.steer,
                agent_speed_mps: agent.speed,
                classic_steer_rad: classic.steer,
                classic_speed_mps: classic.speed,
                reward,
            });
        }
        let progress = if lap_complete { 1.0 } else { self.tracker.progress() };
        Ok(StepOutcome {
            observation: self.observation(),
            reward,
            done: self.done,
            info: StepInfo {
                progress,
                time,
                lap_time: lap_complete.then_some(time),
                crashed,
                lap_complete,
                truncated,
                state: self.state,
                agent_action: agent,
                classic_action: classic,
                s,
                d_c,
                psi,
            },
        })
    }
}
