//! Planar LiDAR simulated by grid ray casting.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::track::TrackMap;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LidarError {
    #[error("ray origin ({0:.3}, {1:.3}) is inside an occupied cell")]
    OriginOccupied(f64, f64),
    #[error("a scan needs at least two beams, got {0}")]
    TooFewBeams(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarConfig {
    pub n_beams: usize,
    pub fov: f64,
    pub max_range: f64,
    /// Standard deviation of the additive beam noise (m).
    pub noise_sigma: f64,
    /// When set, cast this many beams across the field of view and keep
    /// `n_beams` of them, as a hardware scan would be downsampled.
    pub full_resolution: Option<usize>,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            n_beams: 20,
            fov: PI,
            max_range: 10.0,
            noise_sigma: 0.01,
            full_resolution: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LidarScan {
    pub beams: Vec<f64>,
    pub beam_angles: Vec<f64>,
    pub fov: f64,
    pub max_range: f64,
}

/// Evenly spaced beam angles across `fov`, endpoints included, relative to
/// the heading.
pub fn beam_angles(n_beams: usize, fov: f64) -> Vec<f64> {
    (0..n_beams)
        .map(|i| -fov / 2.0 + fov * i as f64 / (n_beams - 1) as f64)
        .collect()
}

/// Distance along a ray to the first occupied cell, by incremental cell
/// stepping. Leaving the grid counts as no hit.
pub fn cast_ray(map: &TrackMap, x: f64, y: f64, angle: f64, max_range: f64) -> Result<f64, LidarError> {
    if map.is_occupied(x, y) {
        return Err(LidarError::OriginOccupied(x, y));
    }
    let res = map.resolution();
    let (gx, gy) = map.world_to_grid(x, y);
    let local = angle - map.origin()[2];
    let (dy, dx) = local.sin_cos();
    let (rows, cols) = map.dims();
    let grid = map.grid();

    let mut col = gx.floor() as i64;
    let mut row = gy.floor() as i64;
    let step_c: i64 = if dx > 0.0 { 1 } else { -1 };
    let step_r: i64 = if dy > 0.0 { 1 } else { -1 };
    // parametric distance (in cells) to the next vertical / horizontal boundary
    let mut t_max_c = if dx.abs() < 1e-15 {
        f64::INFINITY
    } else if dx > 0.0 {
        ((col + 1) as f64 - gx) / dx
    } else {
        (gx - col as f64) / -dx
    };
    let mut t_max_r = if dy.abs() < 1e-15 {
        f64::INFINITY
    } else if dy > 0.0 {
        ((row + 1) as f64 - gy) / dy
    } else {
        (gy - row as f64) / -dy
    };
    let t_delta_c = if dx.abs() < 1e-15 { f64::INFINITY } else { 1.0 / dx.abs() };
    let t_delta_r = if dy.abs() < 1e-15 { f64::INFINITY } else { 1.0 / dy.abs() };
    let t_limit = max_range / res;

    loop {
        let t = if t_max_c < t_max_r {
            col += step_c;
            let t = t_max_c;
            t_max_c += t_delta_c;
            t
        } else {
            row += step_r;
            let t = t_max_r;
            t_max_r += t_delta_r;
            t
        };
        if t >= t_limit {
            return Ok(max_range);
        }
        if col < 0 || row < 0 || col >= cols as i64 || row >= rows as i64 {
            return Ok(max_range);
        }
        if grid[[row as usize, col as usize]] {
            return Ok(t * res);
        }
    }
}

/// Noisy scan from pose (x, y, yaw). Noise is zero-mean Gaussian per beam
/// and the result is clamped to [0, max_range].
pub fn scan<R: Rng + ?Sized>(
    map: &TrackMap,
    x: f64,
    y: f64,
    yaw: f64,
    config: &LidarConfig,
    rng: &mut R,
) -> Result<LidarScan, LidarError> {
    if config.n_beams < 2 {
        return Err(LidarError::TooFewBeams(config.n_beams));
    }
    let angles = match config.full_resolution {
        Some(full) if full > config.n_beams => {
            let all = beam_angles(full, config.fov);
            (0..config.n_beams)
                .map(|i| {
                    let idx = (i as f64 * (full - 1) as f64 / (config.n_beams - 1) as f64).round() as usize;
                    all[idx]
                })
                .collect()
        }
        _ => beam_angles(config.n_beams, config.fov),
    };
    let noise = (config.noise_sigma > 0.0).then(|| Normal::new(0.0, config.noise_sigma).expect("finite sigma"));
    let mut beams = Vec::with_capacity(angles.len());
    for &a in &angles {
        let mut d = cast_ray(map, x, y, yaw + a, config.max_range)?;
        if let Some(n) = &noise {
            d += n.sample(rng);
        }
        beams.push(d.clamp(0.0, config.max_range));
    }
    Ok(LidarScan {
        beams,
        beam_angles: angles,
        fov: config.fov,
        max_range: config.max_range,
    })
}
