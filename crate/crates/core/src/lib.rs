//! Autonomous-racing workbench: a 2D race simulator with single-track
//! dynamics and ray-cast LiDAR, a minimum-curvature raceline with pure
//! pursuit tracking, and a TD3 agent trained with either a trajectory-aided
//! reward (penalizing deviation from the classical planner's action) or a
//! cross-track/heading reward.

pub mod geometry;
pub mod track;
pub mod dynamics;
pub mod lidar;
pub mod raceline;
pub mod pursuit;
pub mod neural;
pub mod td3;
pub mod env;
pub mod harness;
