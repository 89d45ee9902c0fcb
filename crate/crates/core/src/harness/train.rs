use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::eval::{run_evaluation, AgentPolicy, EvalSummary};
use super::seeds::{stream_rng, stream_seed, Stream};
use super::{write_json, ExperimentConfig, HarnessError, Track};
use crate::env::RacingEnv;
use crate::raceline::RaceTrajectory;
use crate::td3::{ReplayBuffer, Td3Agent, Transition};

/// One finished training episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Environment steps taken in this episode.
    pub steps: usize,
    /// Environment steps taken since training began, at episode end.
    pub total_steps: usize,
    pub reward: f64,
    pub progress: f64,
    pub crashed: bool,
    pub lap_complete: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingCurve {
    pub episodes: Vec<EpisodeRecord>,
}

impl TrainingCurve {
    pub fn push(&mut self, record: EpisodeRecord) {
        debug_assert!(self.episodes.last().map_or(true, |l| l.episode < record.episode));
        self.episodes.push(record);
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// Mean progress over the last `n` episodes.
    pub fn final_mean_progress(&self, n: usize) -> Option<f64> {
        let tail = &self.episodes[self.episodes.len().saturating_sub(n)..];
        (!tail.is_empty()).then(|| tail.iter().map(|e| e.progress).sum::<f64>() / tail.len() as f64)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_path(path)?;
        if self.episodes.is_empty() {
            w.write_record(["episode", "steps", "total_steps", "reward", "progress", "crashed", "lap_complete"])?;
        }
        for e in &self.episodes {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self, HarnessError> {
        let mut r = csv::Reader::from_path(path)?;
        let episodes = r.deserialize().collect::<Result<Vec<EpisodeRecord>, _>>()?;
        Ok(Self { episodes })
    }
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub agent: Td3Agent,
    pub curve: TrainingCurve,
}

#[derive(Serialize)]
struct Status<'a> {
    status: &'a str,
    steps_completed: usize,
    error: Option<String>,
}

/// Trains one agent for `config.train_steps` environment steps from master
/// seed `seed`. With `out_dir`, writes `curve.csv`, `agent.json`,
/// `config.toml` and `status.json`; on failure the partial curve is kept and
/// the status file says so.
pub fn run_training(
    config: &ExperimentConfig,
    track: &Track,
    raceline: &RaceTrajectory,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<TrainingRun, HarnessError> {
    let mut env = track.env(raceline, config, config.train_random_start, stream_seed(seed, Stream::Env))?;
    let mut agent = Td3Agent::new(
        env.observation_size(),
        RacingEnv::ACTION_SIZE,
        config.td3.clone(),
        &mut stream_rng(seed, Stream::AgentInit),
    )?;
    let mut curve = TrainingCurve::default();
    let mut steps_done = 0;
    let result = train_loop(config, &mut env, &mut agent, &mut curve, seed, &mut steps_done);

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        curve.write_csv(&dir.join("curve.csv"))?;
        std::fs::write(dir.join("config.toml"), config.to_toml())?;
        if result.is_ok() {
            agent.save(&dir.join("agent.json"))?;
        }
        let status = Status {
            status: if result.is_ok() { "ok" } else { "failed" },
            steps_completed: steps_done,
            error: result.as_ref().err().map(|e| e.to_string()),
        };
        write_json(&dir.join("status.json"), &status)?;
    }
    result.map_err(|e| e.context(format!("training {} seed {seed} at step {steps_done}", track.name)))?;
    Ok(TrainingRun { agent, curve })
}

fn train_loop(
    config: &ExperimentConfig,
    env: &mut RacingEnv,
    agent: &mut Td3Agent,
    curve: &mut TrainingCurve,
    seed: u64,
    steps_done: &mut usize,
) -> Result<(), HarnessError> {
    let mut explore = stream_rng(seed, Stream::Exploration);
    let mut sampling = stream_rng(seed, Stream::Sampling);
    let mut noise = stream_rng(seed, Stream::Noise);
    let td3 = &config.td3;
    let mut buffer = ReplayBuffer::new(td3.replay_capacity, env.observation_size(), RacingEnv::ACTION_SIZE);

    let mut obs = env.reset()?;
    let (mut ep_reward, mut ep_steps, mut episode) = (0.0, 0usize, 0usize);
    for step in 0..config.train_steps {
        let action = if step < td3.warmup_steps {
            vec![explore.gen_range(-1.0..=1.0), explore.gen_range(-1.0..=1.0)]
        } else {
            agent.select_action(&obs, true, &mut explore)?
        };
        let out = env.step(&action)?;
        buffer.push(&Transition {
            state: obs,
            action,
            reward: out.reward,
            next_state: out.observation.clone(),
            done: out.done && !out.info.truncated,
        })?;
        ep_reward += out.reward;
        ep_steps += 1;
        *steps_done = step + 1;

        if step >= td3.warmup_steps && buffer.len() >= td3.batch_size {
            let batch = buffer.sample(td3.batch_size, &mut sampling)?;
            let smoothing = agent.smoothing_noise(td3.batch_size, &mut noise);
            agent.update_with(&batch, &smoothing)?;
        }

        if out.done {
            curve.push(EpisodeRecord {
                episode,
                steps: ep_steps,
                total_steps: step + 1,
                reward: ep_reward,
                progress: out.info.progress,
                crashed: out.info.crashed,
                lap_complete: out.info.lap_complete,
            });
            episode += 1;
            ep_reward = 0.0;
            ep_steps = 0;
            obs = env.reset()?;
        } else {
            obs = out.observation;
        }
    }
    Ok(())
}

/// Evaluates a trained agent over `config.eval_laps` laps from the fixed
/// start and saves the summary into `out_dir` when given.
pub fn evaluate_cell(
    config: &ExperimentConfig,
    track: &Track,
    raceline: &RaceTrajectory,
    agent: &Td3Agent,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<EvalSummary, HarnessError> {
    let mut env = track.env(raceline, config, false, stream_seed(seed, Stream::Evaluation))?;
    let (summary, _) = run_evaluation(&mut AgentPolicy { agent }, &mut env, config.eval_laps, false)?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        summary.save(dir)?;
    }
    Ok(summary)
}
