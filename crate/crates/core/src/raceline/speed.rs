//! Minimum-time speed profile: lateral friction cap followed by forward
//! (acceleration) and backward (braking) passes under a friction circle.

use crate::dynamics::{VehicleParams, G};

use super::RacelineError;

/// Longitudinal acceleration left over after cornering at speed `v` on
/// curvature `kappa`.
pub fn available_accel(kappa: f64, v: f64, params: &VehicleParams) -> f64 {
    let lat = kappa.abs() * v * v / (params.mu * G);
    params.a_max * (1.0 - lat * lat).max(0.0).sqrt()
}

/// Lateral speed cap `min(v_max, sqrt(μg/|κ|))`.
pub fn lateral_cap(kappa: f64, params: &VehicleParams) -> f64 {
    if kappa == 0.0 {
        params.v_max
    } else {
        (params.mu * G / kappa.abs()).sqrt().min(params.v_max)
    }
}

/// Largest speed `x ≤ upper` at a point of curvature `kappa` reachable over
/// `ds` from neighbour speed `from`, with the friction budget taken at the
/// point itself: `x² ≤ from² + 2·a(κ, x)·Δs`.
pub fn implicit_reach(from: f64, kappa: f64, upper: f64, ds: f64, params: &VehicleParams) -> f64 {
    let excess = |x: f64| x * x - 2.0 * available_accel(kappa, x, params) * ds - from * from;
    if excess(upper) <= 0.0 {
        return upper;
    }
    let (mut lo, mut hi) = (from.min(upper), upper);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    lo
}

/// Segment lengths from cumulative arc length; a closed path appends the
/// closing segment `total_length − cum_s[last]`.
pub fn segment_lengths(cum_s: &[f64], closed_length: Option<f64>) -> Result<Vec<f64>, RacelineError> {
    let mut ds: Vec<f64> = cum_s.windows(2).map(|w| w[1] - w[0]).collect();
    if let Some(total) = closed_length {
        ds.push(total - cum_s.last().copied().unwrap_or(0.0));
    }
    if let Some(i) = ds.iter().position(|&d| !(d > 0.0)) {
        return Err(RacelineError::NonPositiveStep(i));
    }
    Ok(ds)
}

/// Speed reference per point. `closed_length` is the loop length for closed
/// paths (`None` for open ones).
pub fn speed_profile(
    kappa: &[f64],
    cum_s: &[f64],
    closed_length: Option<f64>,
    params: &VehicleParams,
) -> Result<Vec<f64>, RacelineError> {
    speed_profile_from(kappa, cum_s, closed_length, params, None)
}

/// As [`speed_profile`], optionally pinning the speed at point 0 (e.g. a
/// standing start). A pinned start is not wrapped around the loop, so the
/// result describes the first lap.
pub fn speed_profile_from(
    kappa: &[f64],
    cum_s: &[f64],
    closed_length: Option<f64>,
    params: &VehicleParams,
    start_speed: Option<f64>,
) -> Result<Vec<f64>, RacelineError> {
    let n = kappa.len();
    if n != cum_s.len() {
        return Err(RacelineError::LengthMismatch(n, cum_s.len()));
    }
    if n < 2 {
        return Err(RacelineError::TooFewPoints(n));
    }
    let ds = segment_lengths(cum_s, closed_length)?;
    let closed = closed_length.is_some();
    let mut v: Vec<f64> = kappa.iter().map(|&k| lateral_cap(k, params)).collect();
    let forward = |v: &mut Vec<f64>, wrap: bool| {
        let segs = if wrap { n } else { n - 1 };
        let mut changed = false;
        for i in 0..segs {
            let j = (i + 1) % n;
            let reach = implicit_reach(v[i], kappa[j], v[j], ds[i], params);
            if reach < v[j] {
                v[j] = reach;
                changed = true;
            }
        }
        changed
    };
    let backward = |v: &mut Vec<f64>, wrap: bool| {
        let segs = if wrap { n } else { n - 1 };
        let mut changed = false;
        for i in (0..segs).rev() {
            let j = (i + 1) % n;
            let reach = implicit_reach(v[j], kappa[i], v[i], ds[i], params);
            if reach < v[i] {
                v[i] = reach;
                changed = true;
            }
        }
        changed
    };

    // Passes repeat until nothing changes.
    let settle = |v: &mut Vec<f64>, wrap: bool| {
        let mut iterations = 0;
        loop {
            let f = forward(v, wrap);
            let b = backward(v, wrap);
            iterations += 1;
            if !(f || b) || iterations > 4 * n {
                break;
            }
        }
    };
    match (closed, start_speed) {
        (true, None) => settle(&mut v, true),
        (_, Some(v0)) => {
            if closed {
                // steady-state loop profile first, then the launch on top
                v = speed_profile_from(kappa, cum_s, closed_length, params, None)?;
            }
            v[0] = v[0].min(v0);
            settle(&mut v, false);
        }
        (false, None) => settle(&mut v, false),
    }
    for s in v.iter_mut() {
        *s = s.max(params.v_min);
    }
    Ok(v)
}

/// Time to traverse a profile assuming constant acceleration on every
/// segment: Σ 2Δs / (v_i + v_{i+1}).
pub fn profile_time(v: &[f64], cum_s: &[f64], closed_length: Option<f64>) -> Result<f64, RacelineError> {
    let ds = segment_lengths(cum_s, closed_length)?;
    let n = v.len();
    Ok(ds
        .iter()
        .enumerate()
        .map(|(i, d)| 2.0 * d / (v[i] + v[(i + 1) % n]))
        .sum())
}
