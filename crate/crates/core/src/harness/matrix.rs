use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::export::{progress_band, write_progress_band};
use super::train::{evaluate_cell, run_training, TrainingCurve};
use super::{write_json, ExperimentConfig, HarnessError, Track};
use crate::env::RewardKind;

/// One (map, reward mode, speed cap, seed) combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixCell {
    pub map: String,
    pub reward_mode: RewardKind,
    pub v_max: f64,
    pub seed: u64,
}

impl MatrixCell {
    /// Every combination, seeds taken from `base.seeds`.
    pub fn grid(base: &ExperimentConfig, maps: &[String], modes: &[RewardKind], speeds: &[f64]) -> Vec<Self> {
        let mut cells = Vec::new();
        for map in maps {
            for &reward_mode in modes {
                for &v_max in speeds {
                    for &seed in &base.seeds {
                        cells.push(Self { map: map.clone(), reward_mode, v_max, seed });
                    }
                }
            }
        }
        cells
    }

    /// Stable identifier, also the cell's directory name.
    pub fn key(&self) -> String {
        format!("{}_{}_v{}_s{}", map_stem(&self.map), self.reward_mode.name(), self.v_max, self.seed)
    }

    fn group(&self) -> String {
        format!("{}_{}_v{}", map_stem(&self.map), self.reward_mode.name(), self.v_max)
    }

    pub fn config(&self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut c = base.clone();
        c.map = self.map.clone();
        c.reward.kind = self.reward_mode;
        c.vehicle.v_max = self.v_max;
        c.seeds = vec![self.seed];
        c
    }
}

fn map_stem(map: &str) -> String {
    Path::new(map).file_stem().and_then(|s| s.to_str()).unwrap_or(map).to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Failed,
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub map: String,
    pub reward_mode: RewardKind,
    pub v_max: f64,
    pub seed: u64,
    pub completion_rate: Option<f64>,
    pub mean_lap_time_s: Option<f64>,
    pub mean_progress: Option<f64>,
    pub train_steps: usize,
    pub status: CellStatus,
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<ResultRow>, _>>()?)
}

fn run_cell(base: &ExperimentConfig, cell: &MatrixCell, dir: &Path) -> Result<ResultRow, HarnessError> {
    let config = cell.config(base);
    config.validate()?;
    let track = Track::load(&config.map)?;
    let raceline = track.raceline(&config.vehicle, &config.raceline)?;
    let run = run_training(&config, &track, &raceline, cell.seed, Some(dir))?;
    let summary = evaluate_cell(&config, &track, &raceline, &run.agent, cell.seed, Some(dir))?;
    Ok(ResultRow {
        map: cell.map.clone(),
        reward_mode: cell.reward_mode,
        v_max: cell.v_max,
        seed: cell.seed,
        completion_rate: Some(summary.completion_rate),
        mean_lap_time_s: summary.mean_lap_time_s,
        mean_progress: Some(summary.mean_progress),
        train_steps: config.train_steps,
        status: CellStatus::Ok,
    })
}

fn load_finished(path: &Path) -> Option<ResultRow> {
    let text = std::fs::read_to_string(path).ok()?;
    let row: ResultRow = serde_json::from_str(&text).ok()?;
    (row.status == CellStatus::Ok).then_some(row)
}

/// Runs every cell, `workers` at a time, writing per-cell artifacts under
/// `out_dir/cells/<key>/`, the tidy `results.csv` and one
/// `band_<group>.csv` per (map, mode, speed) group. Cells whose
/// `result.json` already reports success are not rerun. A failing cell is
/// recorded with status `failed` and the rest continue.
pub fn run_matrix(
    base: &ExperimentConfig,
    cells: &[MatrixCell],
    out_dir: &Path,
    workers: usize,
) -> Result<Vec<ResultRow>, HarnessError> {
    let mut keys: Vec<String> = cells.iter().map(MatrixCell::key).collect();
    keys.sort();
    if keys.windows(2).any(|w| w[0] == w[1]) {
        return Err(HarnessError::Config("matrix contains duplicate cells".into()));
    }
    std::fs::create_dir_all(out_dir.join("cells"))?;
    let dirs: Vec<PathBuf> = cells.iter().map(|c| out_dir.join("cells").join(c.key())).collect();
    let rows: Mutex<Vec<Option<ResultRow>>> = Mutex::new(vec![None; cells.len()]);
    let next = AtomicUsize::new(0);

    let work = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        if i >= cells.len() {
            break;
        }
        let (cell, dir) = (&cells[i], &dirs[i]);
        let result_path = dir.join("result.json");
        let row = match load_finished(&result_path) {
            Some(row) => {
                log::info!("{}: already complete, skipping", cell.key());
                row
            }
            None => {
                log::info!("{}: running", cell.key());
                let row = run_cell(base, cell, dir).unwrap_or_else(|e| {
                    log::error!("{}: {e}", cell.key());
                    ResultRow {
                        map: cell.map.clone(),
                        reward_mode: cell.reward_mode,
                        v_max: cell.v_max,
                        seed: cell.seed,
                        completion_rate: None,
                        mean_lap_time_s: None,
                        mean_progress: None,
                        train_steps: base.train_steps,
                        status: CellStatus::Failed,
                    }
                });
                let saved = std::fs::create_dir_all(dir).map_err(HarnessError::from).and_then(|_| write_json(&result_path, &row));
                if let Err(e) = saved {
                    log::error!("{}: could not save result: {e}", cell.key());
                }
                row
            }
        };
        rows.lock().expect("no worker panicked")[i] = Some(row);
    };
    std::thread::scope(|scope| {
        for _ in 1..workers.max(1) {
            scope.spawn(work);
        }
        work();
    });

    let rows: Vec<ResultRow> = rows
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every cell visited"))
        .collect();
    write_results(&out_dir.join("results.csv"), &rows)?;

    let mut groups: Vec<String> = cells.iter().map(MatrixCell::group).collect();
    groups.dedup();
    groups.sort();
    groups.dedup();
    for group in groups {
        let curves: Vec<TrainingCurve> = cells
            .iter()
            .zip(&dirs)
            .filter(|(c, _)| c.group() == group)
            .filter_map(|(_, d)| TrainingCurve::read_csv(&d.join("curve.csv")).ok())
            .collect();
        if !curves.is_empty() {
            let band = progress_band(&curves, (base.train_steps / 50).max(1), 10)?;
            write_progress_band(&out_dir.join(format!("band_{group}.csv")), &band)?;
        }
    }
    Ok(rows)
}
