//! Centerline extraction.
//!
//! The walls are split into connected components. For a closed track the
//! border-touching component is the outer wall and everything else is the
//! inner island; for an open corridor the two largest components are the two
//! sides. The centerline is the zero level set of `d_a − d_b` (distance to one
//! wall minus distance to the other), which is the ridge of the distance field
//! between the two walls. It is traced with marching squares, smoothed,
//! resampled and oriented counter-clockwise.

use std::collections::{HashMap, VecDeque};

use ndarray::Array2;

use super::edt::distance_field;
use super::map::{bilinear, TrackMap};
use super::{Centerline, TrackError};
use crate::geometry::{signed_area, Point, Polyline};

#[derive(Debug, Clone, Copy)]
pub struct ExtractOptions {
    /// Output point spacing (m).
    pub spacing: f64,
    pub closed: bool,
    /// Taubin smoothing passes applied before the final resample.
    pub smoothing_passes: usize,
    pub min_loop_length: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            spacing: 0.2,
            closed: true,
            smoothing_passes: 20,
            min_loop_length: 10.0,
        }
    }
}

struct Component {
    cells: Vec<(usize, usize)>,
    touches_border: bool,
}

fn components(mask: &Array2<bool>, eight: bool) -> Vec<Component> {
    let (rows, cols) = mask.dim();
    let mut seen = Array2::from_elem((rows, cols), false);
    let mut out = Vec::new();
    let offsets: &[(isize, isize)] = if eight {
        &[(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
    } else {
        &[(-1, 0), (1, 0), (0, -1), (0, 1)]
    };
    for start in mask.indexed_iter().filter(|(_, &m)| m).map(|(rc, _)| rc) {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut comp = Component {
            cells: Vec::new(),
            touches_border: false,
        };
        while let Some((r, c)) = queue.pop_front() {
            comp.cells.push((r, c));
            if r == 0 || c == 0 || r == rows - 1 || c == cols - 1 {
                comp.touches_border = true;
            }
            for &(dr, dc) in offsets {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr < 0 || nc < 0 || nr >= rows as isize || nc >= cols as isize {
                    continue;
                }
                let n = (nr as usize, nc as usize);
                if mask[n] && !seen[n] {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        out.push(comp);
    }
    out
}

fn seed_grid(dim: (usize, usize), comps: &[&Component]) -> Array2<bool> {
    let mut g = Array2::from_elem(dim, false);
    for comp in comps {
        for &rc in &comp.cells {
            g[rc] = true;
        }
    }
    g
}

/// Zero-crossing traced by marching squares, in fractional (col, row) units
/// of cell centers.
fn zero_contours(f: &Array2<f64>) -> Vec<(Vec<(f64, f64)>, bool)> {
    let (rows, cols) = f.dim();
    let positive = |r: usize, c: usize| f[[r, c]] >= 0.0;
    // edge ids: 2*(r*cols+c) horizontal to (r, c+1); +1 vertical to (r+1, c)
    let h_edge = |r: usize, c: usize| 2 * (r * cols + c);
    let v_edge = |r: usize, c: usize| 2 * (r * cols + c) + 1;
    let crossing = |id: usize| -> (f64, f64) {
        let cell = id / 2;
        let (r, c) = (cell / cols, cell % cols);
        let (r2, c2) = if id % 2 == 0 { (r, c + 1) } else { (r + 1, c) };
        let (a, b) = (f[[r, c]], f[[r2, c2]]);
        let t = if a == b { 0.5 } else { a / (a - b) };
        (c as f64 + t * (c2 as f64 - c as f64), r as f64 + t * (r2 as f64 - r as f64))
    };

    let mut adj: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut link = |a: usize, b: usize| {
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    };
    for r in 0..rows.saturating_sub(1) {
        for c in 0..cols.saturating_sub(1) {
            // corners counter-clockwise: (r,c) (r,c+1) (r+1,c+1) (r+1,c)
            let corners = [positive(r, c), positive(r, c + 1), positive(r + 1, c + 1), positive(r + 1, c)];
            // edges between consecutive corners
            let edges = [h_edge(r, c), v_edge(r, c + 1), h_edge(r + 1, c), v_edge(r, c)];
            let crossed: Vec<usize> = (0..4).filter(|&k| corners[k] != corners[(k + 1) % 4]).collect();
            match crossed.len() {
                2 => link(edges[crossed[0]], edges[crossed[1]]),
                4 => {
                    let centre = 0.25 * (f[[r, c]] + f[[r, c + 1]] + f[[r + 1, c + 1]] + f[[r + 1, c]]);
                    if (centre >= 0.0) == corners[0] {
                        // corner 0's sign region connects through the middle
                        link(edges[0], edges[1]);
                        link(edges[2], edges[3]);
                    } else {
                        link(edges[3], edges[0]);
                        link(edges[1], edges[2]);
                    }
                }
                _ => {}
            }
        }
    }

    let mut visited: HashMap<usize, bool> = HashMap::new();
    let mut chains = Vec::new();
    let mut keys: Vec<usize> = adj.keys().copied().collect();
    keys.sort_unstable();
    // open chains first, starting from their endpoints
    let ends: Vec<usize> = keys.iter().copied().filter(|k| adj[k].len() == 1).collect();
    for start in ends.into_iter().chain(keys.iter().copied()) {
        if visited.contains_key(&start) {
            continue;
        }
        let mut chain = vec![start];
        visited.insert(start, true);
        let mut prev = usize::MAX;
        let mut cur = start;
        let closed;
        loop {
            let next = adj[&cur].iter().copied().find(|&n| n != prev && !visited.contains_key(&n));
            match next {
                Some(n) => {
                    visited.insert(n, true);
                    chain.push(n);
                    prev = cur;
                    cur = n;
                }
                None => {
                    closed = chain.len() > 2 && adj[&cur].contains(&start);
                    break;
                }
            }
        }
        chains.push((chain.into_iter().map(crossing).collect(), closed));
    }
    chains
}

fn taubin(points: &mut [Point], closed: bool, passes: usize) {
    let n = points.len();
    if n < 3 {
        return;
    }
    for _ in 0..passes {
        for factor in [0.5, -0.53] {
            let prev = points.to_vec();
            for i in 0..n {
                if !closed && (i == 0 || i == n - 1) {
                    continue;
                }
                let a = prev[(i + n - 1) % n];
                let b = prev[(i + 1) % n];
                let p = prev[i];
                points[i] = Point::new(
                    p.x + factor * (0.5 * (a.x + b.x) - p.x),
                    p.y + factor * (0.5 * (a.y + b.y) - p.y),
                );
            }
        }
    }
}

/// Traces the centerline of a track map.
pub fn extract_centerline(map: &TrackMap, opts: &ExtractOptions) -> Result<Centerline, TrackError> {
    let grid = map.grid();
    let dim = grid.dim();
    let free = grid.mapv(|o| !o);
    let free_parts = components(&free, false);
    match free_parts.len() {
        0 => return Err(TrackError::NoFreeSpace),
        1 => {}
        n => return Err(TrackError::Disconnected(n)),
    }
    let walls = components(grid, true);

    let (side_a, side_b): (Vec<&Component>, Vec<&Component>) = if opts.closed {
        // a = inner island (left of a counter-clockwise loop), b = outer wall
        let inner: Vec<&Component> = walls.iter().filter(|c| !c.touches_border).collect();
        let outer: Vec<&Component> = walls.iter().filter(|c| c.touches_border).collect();
        if inner.is_empty() || outer.is_empty() {
            return Err(TrackError::OpenTrack);
        }
        (inner, outer)
    } else {
        let mut sorted: Vec<&Component> = walls.iter().collect();
        sorted.sort_by_key(|c| std::cmp::Reverse(c.cells.len()));
        if sorted.len() < 2 {
            return Err(TrackError::NoCenterline);
        }
        (vec![sorted[0]], vec![sorted[1]])
    };

    let res = map.resolution();
    let dist_a = distance_field(&seed_grid(dim, &side_a), res);
    let dist_b = distance_field(&seed_grid(dim, &side_b), res);
    let diff = &dist_a - &dist_b;

    let to_world = |(gc, gr): (f64, f64)| -> Point {
        let [ox, oy, yaw] = map.origin();
        let lx = (gc + 0.5) * res;
        let ly = (gr + 0.5) * res;
        let (s, c) = yaw.sin_cos();
        Point::new(ox + c * lx - s * ly, oy + s * lx + c * ly)
    };

    let chains = zero_contours(&diff);
    let (raw, _) = chains
        .into_iter()
        .filter(|(_, closed)| *closed == opts.closed)
        .max_by_key(|(pts, _)| pts.len())
        .ok_or(TrackError::NoCenterline)?;
    let mut pts: Vec<Point> = raw.into_iter().map(to_world).collect();
    pts.dedup_by(|a, b| a.dist(*b) < 1e-9);
    if opts.closed && pts.len() > 1 && pts[0].dist(*pts.last().unwrap()) < 1e-9 {
        pts.pop();
    }

    let line = Polyline::new(pts, opts.closed).ok_or(TrackError::NoCenterline)?;
    if opts.closed && line.total_length() < opts.min_loop_length {
        return Err(TrackError::LoopTooShort(line.total_length()));
    }
    let mut pts = line
        .resample(opts.spacing)
        .ok_or(TrackError::NoCenterline)?
        .points()
        .to_vec();
    taubin(&mut pts, opts.closed, opts.smoothing_passes);

    if opts.closed && signed_area(&pts) < 0.0 {
        pts.reverse();
    }
    if !opts.closed {
        let (first, last) = (pts[0], *pts.last().unwrap());
        if (last.x, last.y) < (first.x, first.y) {
            pts.reverse();
        }
    }
    let line = Polyline::new(pts, opts.closed)
        .and_then(|l| l.resample(opts.spacing))
        .ok_or(TrackError::NoCenterline)?;
    if opts.closed && line.total_length() < opts.min_loop_length {
        return Err(TrackError::LoopTooShort(line.total_length()));
    }

    let sample = |field: &Array2<f64>, p: Point| {
        let (gx, gy) = map.world_to_grid(p.x, p.y);
        bilinear(field, gx - 0.5, gy - 0.5)
    };
    // which wall lies to the left of the direction of travel
    let a_on_left = if opts.closed {
        true
    } else {
        let mid = line.len() / 2;
        let p = line.points()[mid];
        let h = line.vertex_heading(mid);
        let probe = Point::new(p.x - 0.5 * res * h.sin(), p.y + 0.5 * res * h.cos());
        sample(&dist_a, probe) < sample(&dist_a, p)
    };
    let (left_field, right_field) = if a_on_left { (&dist_a, &dist_b) } else { (&dist_b, &dist_a) };
    let width_left = line.points().iter().map(|&p| sample(left_field, p)).collect();
    let width_right = line.points().iter().map(|&p| sample(right_field, p)).collect();
    Centerline::new(line.points().to_vec(), width_left, width_right, opts.closed)
}
