//! Seeded experiment runner: training, evaluation, experiment matrices and
//! figure data export.

mod config;
mod eval;
mod export;
mod matrix;
mod seeds;
mod train;

use std::path::Path;

use thiserror::Error;

use crate::dynamics::VehicleParams;
use crate::env::{EnvError, RacingEnv};
use crate::raceline::{generate_raceline, RaceTrajectory, RacelineConfig, RacelineError};
use crate::td3::Td3Error;
use crate::track::{extract_centerline, fixtures::Fixture, Centerline, ExtractOptions, TrackError, TrackMap};

pub use config::ExperimentConfig;
pub use eval::{run_evaluation, AgentPolicy, ClassicPolicy, EvalSummary, LapRecord, Policy};
pub use export::{
    export_speed_slip_profile, progress_band, read_profile, read_progress_band, write_profile, write_progress_band,
    BandRow, ProfileRow,
};
pub use matrix::{read_results, run_matrix, write_results, MatrixCell, ResultRow, CellStatus};
pub use seeds::{stream_rng, stream_seed, Stream};
pub use train::{evaluate_cell, run_training, EpisodeRecord, TrainingCurve, TrainingRun};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Track(#[from] TrackError),
    #[error(transparent)]
    Raceline(#[from] RacelineError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] Td3Error),
    #[error("csv: {0}")]
    Csv(String),
    #[error("json: {0}")]
    Json(String),
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<HarnessError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    pub fn context(self, context: impl Into<String>) -> Self {
        HarnessError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Csv(e.to_string())
    }
}

/// A loaded track with its centerline.
#[derive(Debug, Clone)]
pub struct Track {
    pub name: String,
    pub map: TrackMap,
    pub centerline: Centerline,
}

impl Track {
    /// Builds a fixture by name, or loads a map from a metadata YAML path.
    pub fn load(id: &str) -> Result<Self, HarnessError> {
        let map = match Fixture::from_name(id) {
            Some(f) => f.build(),
            None => TrackMap::load_from_files(Path::new(id)).map_err(|e| HarnessError::from(e).context(id.to_string()))?,
        };
        let centerline = extract_centerline(&map, &ExtractOptions::default())?;
        let name = Path::new(id)
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or(id)
            .to_string();
        Ok(Self { name, map, centerline })
    }

    pub fn raceline(&self, params: &VehicleParams, config: &RacelineConfig) -> Result<RaceTrajectory, HarnessError> {
        Ok(generate_raceline(&self.centerline, params, config)?)
    }

    /// Environment for this track under `config`.
    pub fn env(
        &self,
        raceline: &RaceTrajectory,
        config: &ExperimentConfig,
        random_start: bool,
        seed: u64,
    ) -> Result<RacingEnv, HarnessError> {
        Ok(RacingEnv::new(
            self.map.clone(),
            self.centerline.clone(),
            raceline.clone(),
            config.vehicle,
            config.env_config(random_start),
            seed,
        )?)
    }
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Json(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}
