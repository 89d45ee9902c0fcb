use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{write_json, HarnessError};
use crate::dynamics::ControlAction;
use crate::env::{scale_action, RacingEnv, TraceRow};
use crate::td3::Td3Agent;

/// Anything that drives the car from observations.
pub trait Policy {
    fn action(&mut self, observation: &[f64], env: &RacingEnv) -> Result<ControlAction, HarnessError>;
}

/// The pure pursuit planner following the environment's raceline.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClassicPolicy;

impl Policy for ClassicPolicy {
    fn action(&mut self, _observation: &[f64], env: &RacingEnv) -> Result<ControlAction, HarnessError> {
        Ok(env.classic_action())
    }
}

/// A trained agent acting deterministically.
#[derive(Debug, Clone, Copy)]
pub struct AgentPolicy<'a> {
    pub agent: &'a Td3Agent,
}

impl Policy for AgentPolicy<'_> {
    fn action(&mut self, observation: &[f64], env: &RacingEnv) -> Result<ControlAction, HarnessError> {
        let a = self.agent.act(observation)?;
        Ok(scale_action([a[0], a[1]], env.params()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LapRecord {
    pub episode: usize,
    pub completed: bool,
    pub crashed: bool,
    pub progress: f64,
    pub lap_time_s: Option<f64>,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub completion_rate: f64,
    /// Mean over completed laps only.
    pub mean_lap_time_s: Option<f64>,
    pub mean_progress: f64,
    pub laps: Vec<LapRecord>,
}

impl EvalSummary {
    pub fn from_laps(laps: Vec<LapRecord>) -> Result<Self, HarnessError> {
        if laps.is_empty() {
            return Err(HarnessError::Empty("evaluation"));
        }
        let n = laps.len() as f64;
        let times: Vec<f64> = laps.iter().filter_map(|l| l.lap_time_s).collect();
        Ok(Self {
            completion_rate: laps.iter().filter(|l| l.completed).count() as f64 / n,
            mean_lap_time_s: (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64),
            mean_progress: laps.iter().map(|l| l.progress).sum::<f64>() / n,
            laps,
        })
    }

    pub fn completed(&self) -> usize {
        self.laps.iter().filter(|l| l.completed).count()
    }

    /// Writes `eval_summary.json` and `eval_laps.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), HarnessError> {
        write_json(&dir.join("eval_summary.json"), self)?;
        let mut w = csv::Writer::from_path(dir.join("eval_laps.csv"))?;
        for lap in &self.laps {
            w.serialize(lap)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `laps` episodes from the fixed start. Returns the summary and, when
/// `record` is set, one trace per episode.
pub fn run_evaluation(
    policy: &mut dyn Policy,
    env: &mut RacingEnv,
    laps: usize,
    record: bool,
) -> Result<(EvalSummary, Vec<Vec<TraceRow>>), HarnessError> {
    env.set_random_start(false);
    env.set_recording(record);
    let mut records = Vec::with_capacity(laps);
    let mut traces = Vec::new();
    for episode in 0..laps {
        let mut obs = env.reset()?;
        let lap = loop {
            let action = policy.action(&obs, env)?;
            let out = env.step_control(action)?;
            obs = out.observation;
            if out.done {
                break LapRecord {
                    episode,
                    completed: out.info.lap_complete,
                    crashed: out.info.crashed,
                    progress: out.info.progress,
                    lap_time_s: out.info.lap_time,
                    steps: env.steps(),
                };
            }
        };
        records.push(lap);
        if record {
            traces.push(env.trace().to_vec());
        }
    }
    Ok((EvalSummary::from_laps(records)?, traces))
}
