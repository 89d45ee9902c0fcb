use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::TrainingCurve;
use super::HarnessError;
use crate::env::TraceRow;

/// Speed and slip along the track for one episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub s_m: f64,
    pub v_mps: f64,
    pub abs_slip_deg: f64,
    pub v_classic_mps: f64,
}

pub fn export_speed_slip_profile(trace: &[TraceRow]) -> Result<Vec<ProfileRow>, HarnessError> {
    if trace.is_empty() {
        return Err(HarnessError::Empty("trace"));
    }
    Ok(trace
        .iter()
        .map(|r| ProfileRow {
            s_m: r.s_m,
            v_mps: r.v_mps,
            abs_slip_deg: r.slip_rad.abs().to_degrees(),
            v_classic_mps: r.classic_speed_mps,
        })
        .collect())
}

pub fn write_profile(path: &Path, rows: &[ProfileRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_profile(path: &Path) -> Result<Vec<ProfileRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<ProfileRow>, _>>()?)
}

/// Progress across repeats at one point of training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub step: usize,
    pub repeats: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Band after dropping the lowest and highest repeat (when there are at
    /// least three).
    pub trimmed_min: f64,
    pub trimmed_max: f64,
}

/// Every `interval` steps, each repeat's mean progress over its last
/// `window` finished episodes, summarised across repeats.
pub fn progress_band(curves: &[TrainingCurve], interval: usize, window: usize) -> Result<Vec<BandRow>, HarnessError> {
    if curves.is_empty() {
        return Err(HarnessError::Empty("curve set"));
    }
    let interval = interval.max(1);
    let end = curves
        .iter()
        .filter_map(|c| c.episodes.last().map(|e| e.total_steps))
        .max()
        .unwrap_or(0);
    let mut rows = Vec::new();
    let mut step = interval;
    while step <= end {
        let mut values: Vec<f64> = curves
            .iter()
            .filter_map(|c| {
                let done = c.episodes.partition_point(|e| e.total_steps <= step);
                let tail = &c.episodes[done.saturating_sub(window)..done];
                (!tail.is_empty()).then(|| tail.iter().map(|e| e.progress).sum::<f64>() / tail.len() as f64)
            })
            .collect();
        if !values.is_empty() {
            values.sort_by(f64::total_cmp);
            let n = values.len();
            let trimmed = if n >= 3 { &values[1..n - 1] } else { &values[..] };
            rows.push(BandRow {
                step,
                repeats: n,
                mean: values.iter().sum::<f64>() / n as f64,
                min: values[0],
                max: values[n - 1],
                trimmed_min: trimmed[0],
                trimmed_max: trimmed[trimmed.len() - 1],
            });
        }
        step += interval;
    }
    Ok(rows)
}

pub fn write_progress_band(path: &Path, rows: &[BandRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_progress_band(path: &Path) -> Result<Vec<BandRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<BandRow>, _>>()?)
}
