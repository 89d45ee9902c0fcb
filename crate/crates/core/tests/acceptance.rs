//! End-to-end acceptance suite. Runs every criterion in order and prints one
//! PASS/FAIL line each; the process exits non-zero if any criterion fails.
//!
//! `TALRACE_FULL_PROTOCOL=1` runs the learning criteria at full scale
//! (100k steps, five seeds) instead of the desk-scale budget, and
//! `TALRACE_CRITERIA=1,2,7` runs only the listed criteria.

use std::path::Path;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use talrace::dynamics::{ControlAction, VehicleParams, G};
use talrace::env::{reward_baseline, reward_tal, RewardConfig, RewardKind, TraceRow};
use talrace::geometry::Point;
use talrace::harness::{
    export_speed_slip_profile, run_evaluation, run_matrix, run_training, AgentPolicy, ClassicPolicy, ExperimentConfig,
    MatrixCell, Track,
};
use talrace::lidar::cast_ray;
use talrace::neural::{Mlp, OutputActivation};
use talrace::raceline::min_curvature::{curvature_objective, offset_points, optimise_offsets};
use talrace::raceline::{speed_profile, MinCurvatureOptions};
use talrace::td3::{Batch, Td3Agent, Td3Config};
use talrace::track::fixtures::Fixture;

const GRAD_REL_TOL: f64 = 1e-4;
const TD3_TOL: f64 = 1e-10;
const RAY_SAMPLES: usize = 200;
const SPEED_DP_TOL: f64 = 0.05;
const CURVATURE_RATIO_TOL: f64 = 1.05;
const CLASSIC_V_MAX: f64 = 6.0;
const CLASSIC_LAPS: usize = 20;
const LAP_TIME_REL_TOL: f64 = 0.05;
const TREND_LOW_SPEED_PROGRESS: f64 = 0.85;
const TREND_HIGH_SPEED_MARGIN: f64 = 0.20;
const MIMICRY_MIN_CORRELATION: f64 = 0.5;
const PROFILE_V_MAX: f64 = 6.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn full_protocol() -> bool {
    std::env::var("TALRACE_FULL_PROTOCOL").is_ok_and(|v| v == "1")
}

fn main() {
    let criteria: Vec<(&str, Box<dyn Fn(&mut Shared) -> Outcome>)> = vec![
        ("gradient correctness", Box::new(|_| gradient_check())),
        ("TD3 micro-oracle", Box::new(|_| td3_micro_oracle())),
        ("ray-cast oracle", Box::new(|_| ray_cast_oracle())),
        ("speed-profile oracle", Box::new(|_| speed_profile_oracle())),
        ("min-curvature oracle", Box::new(|_| min_curvature_oracle())),
        ("classical-planner completion", Box::new(|_| classic_completion())),
        ("reward identities", Box::new(|_| reward_identities())),
        ("progress trend across speeds", Box::new(|_| progress_trend())),
        ("speed-profile mimicry", Box::new(speed_mimicry)),
        ("slip-angle ordering", Box::new(slip_ordering)),
        ("training determinism", Box::new(|_| determinism())),
    ];
    let selected: Option<Vec<usize>> = std::env::var("TALRACE_CRITERIA")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut shared = Shared::default();
    let (mut failures, mut ran) = (0, 0);
    for (i, (name, check)) in criteria.iter().enumerate() {
        if selected.as_ref().is_some_and(|s| !s.contains(&(i + 1))) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let out = check(&mut shared);
        let secs = start.elapsed().as_secs_f64();
        if !out.pass {
            failures += 1;
        }
        println!(
            "[criterion {:>2}] {} {name} ({secs:.1} s): {}",
            i + 1,
            if out.pass { "PASS" } else { "FAIL" },
            out.detail
        );
    }
    println!("acceptance: {} passed, {failures} failed", ran - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// 1. Gradients
// ---------------------------------------------------------------------------

/// Independent forward pass returning outputs and every hidden
/// pre-activation.
fn reference_forward(net: &Mlp, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut h = x.to_vec();
    let mut pre = Vec::new();
    let last = net.layers() - 1;
    for l in 0..net.layers() {
        let (w, b) = net.layer(l);
        let mut z = b.to_vec();
        for (i, &hi) in h.iter().enumerate() {
            for (j, zj) in z.iter_mut().enumerate() {
                *zj += hi * w[[i, j]];
            }
        }
        if l < last {
            pre.extend_from_slice(&z);
            h = z.iter().map(|&v| v.max(0.0)).collect();
        } else {
            h = match net.output_activation() {
                OutputActivation::Tanh => z.iter().map(|v| v.tanh()).collect(),
                OutputActivation::Identity => z,
            };
        }
    }
    (h, pre)
}

fn weighted_loss(net: &Mlp, inputs: &[Vec<f64>], weights: &Array2<f64>) -> (f64, Vec<bool>) {
    let mut loss = 0.0;
    let mut pattern = Vec::new();
    for (b, x) in inputs.iter().enumerate() {
        let (out, pre) = reference_forward(net, x);
        loss += out.iter().enumerate().map(|(k, o)| weights[[b, k]] * o).sum::<f64>();
        pattern.extend(pre.iter().map(|&z| z > 0.0));
    }
    (loss, pattern)
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let (mut checked, mut kinks) = (0usize, 0usize);
    for trial in 0..10 {
        let sizes = if trial == 9 {
            vec![40, 100, 100, 2]
        } else {
            let depth = rng.gen_range(1..=3);
            let mut s = vec![rng.gen_range(1..=40)];
            s.extend((0..depth).map(|_| rng.gen_range(1..=100)));
            s.push(rng.gen_range(1..=2));
            s
        };
        let act = if trial % 2 == 0 { OutputActivation::Tanh } else { OutputActivation::Identity };
        let mut net = Mlp::new(&sizes, act, &mut rng);
        let batch = 3;
        let inputs: Vec<Vec<f64>> = (0..batch).map(|_| (0..sizes[0]).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let weights = Array2::from_shape_fn((batch, *sizes.last().unwrap()), |_| rng.gen_range(-1.0..1.0));
        let x = Array2::from_shape_fn((batch, sizes[0]), |(b, i)| inputs[b][i]);
        let cache = net.forward_cached(x.view()).unwrap();
        let (analytic, grad_in) = net.backward(&cache, weights.view());
        let (_, base_pattern) = weighted_loss(&net, &inputs, &weights);

        for p in 0..net.num_params() {
            let orig = net.params()[p];
            net.params_mut()[p] = orig + h;
            let (fp, pat_p) = weighted_loss(&net, &inputs, &weights);
            net.params_mut()[p] = orig - h;
            let (fm, pat_m) = weighted_loss(&net, &inputs, &weights);
            net.params_mut()[p] = orig;
            if pat_p != base_pattern || pat_m != base_pattern {
                kinks += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * h);
            worst = worst.max(relative_error(analytic[p], numeric));
            checked += 1;
        }
        // input gradient as well
        for b in 0..batch {
            for i in 0..sizes[0] {
                let mut xp = inputs.clone();
                xp[b][i] += h;
                let mut xm = inputs.clone();
                xm[b][i] -= h;
                let (fp, pat_p) = weighted_loss(&net, &xp, &weights);
                let (fm, pat_m) = weighted_loss(&net, &xm, &weights);
                if pat_p != base_pattern || pat_m != base_pattern {
                    kinks += 1;
                    continue;
                }
                worst = worst.max(relative_error(grad_in[[b, i]], (fp - fm) / (2.0 * h)));
                checked += 1;
            }
        }
    }
    outcome(
        worst < GRAD_REL_TOL,
        format!("max relative error {worst:.2e} over {checked} gradients ({kinks} straddled a ReLU kink and were skipped)"),
    )
}

/// |a − n| / max(|a|, |n|), with a 1e-6 floor so gradients that are zero up
/// to rounding compare absolutely.
fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

// ---------------------------------------------------------------------------
// 2. TD3 update against a scalar script
// ---------------------------------------------------------------------------

#[derive(Clone)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, p: &mut [f64], g: &[f64], lr: f64) {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        self.t += 1;
        for i in 0..p.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g[i] * g[i];
            let mh = self.m[i] / (1.0 - b1.powi(self.t));
            let vh = self.v[i] / (1.0 - b2.powi(self.t));
            p[i] -= lr * mh / (vh.sqrt() + eps);
        }
    }
}

/// Actor [w1, b1, w2, b2]: a = tanh(w2·relu(w1·s + b1) + b2).
fn actor_out(p: &[f64], s: f64) -> f64 {
    (p[2] * (p[0] * s + p[1]).max(0.0) + p[3]).tanh()
}

/// Critic [ws, wa, c1, v2, c2]: q = v2·relu(ws·s + wa·a + c1) + c2.
fn critic_out(p: &[f64], s: f64, a: f64) -> f64 {
    p[3] * (p[0] * s + p[1] * a + p[2]).max(0.0) + p[4]
}

struct Scripted {
    actor: Vec<f64>,
    actor_t: Vec<f64>,
    critics: [Vec<f64>; 2],
    critics_t: [Vec<f64>; 2],
    opt_actor: Adam,
    opt_critics: [Adam; 2],
    updates: u64,
}

impl Scripted {
    fn update(&mut self, s: &[f64], a: &[f64], r: &[f64], s2: &[f64], done: &[f64], noise: &[f64], cfg: &Td3Config) {
        let n = s.len() as f64;
        let y: Vec<f64> = (0..s.len())
            .map(|j| {
                let a2 = (actor_out(&self.actor_t, s2[j]) + noise[j]).clamp(-1.0, 1.0);
                let q1 = critic_out(&self.critics_t[0], s2[j], a2);
                let q2 = critic_out(&self.critics_t[1], s2[j], a2);
                r[j] + cfg.gamma * (1.0 - done[j]) * q1.min(q2)
            })
            .collect();
        for k in 0..2 {
            let p = &self.critics[k];
            let mut g = vec![0.0; 5];
            for j in 0..s.len() {
                let z = p[0] * s[j] + p[1] * a[j] + p[2];
                let dl = 2.0 * (critic_out(p, s[j], a[j]) - y[j]) / n;
                let on = if z > 0.0 { 1.0 } else { 0.0 };
                g[0] += dl * p[3] * on * s[j];
                g[1] += dl * p[3] * on * a[j];
                g[2] += dl * p[3] * on;
                g[3] += dl * z.max(0.0);
                g[4] += dl;
            }
            self.opt_critics[k].step(&mut self.critics[k], &g, cfg.learning_rate);
        }
        self.updates += 1;
        if self.updates % cfg.policy_delay == 0 {
            let (p, c) = (&self.actor, &self.critics[0]);
            let mut g = vec![0.0; 4];
            for &sj in s {
                let pre = p[0] * sj + p[1];
                let act = actor_out(p, sj);
                let zc = c[0] * sj + c[1] * act + c[2];
                let dq_da = if zc > 0.0 { c[3] * c[1] } else { 0.0 };
                let du = -dq_da / n * (1.0 - act * act);
                let on = if pre > 0.0 { 1.0 } else { 0.0 };
                g[0] += du * p[2] * on * sj;
                g[1] += du * p[2] * on;
                g[2] += du * pre.max(0.0);
                g[3] += du;
            }
            self.opt_actor.step(&mut self.actor, &g, cfg.learning_rate);
            let tau = cfg.tau;
            let blend = |t: &mut Vec<f64>, m: &[f64]| t.iter_mut().zip(m).for_each(|(t, m)| *t = (1.0 - tau) * *t + tau * m);
            blend(&mut self.actor_t, &self.actor);
            for k in 0..2 {
                blend(&mut self.critics_t[k], &self.critics[k]);
            }
        }
    }
}

fn td3_micro_oracle() -> Outcome {
    let cfg = Td3Config {
        batch_size: 3,
        hidden: vec![1],
        learning_rate: 0.05,
        tau: 0.1,
        replay_capacity: 10,
        ..Td3Config::default()
    };
    let actor = vec![0.8, 0.3, -0.6, 0.1];
    let c1 = vec![0.5, -0.7, 0.4, 1.2, -0.1];
    let c2 = vec![0.6, 0.9, 0.2, 0.9, 0.05];
    let mut agent = Td3Agent::from_networks(
        Mlp::from_params(&[1, 1, 1], OutputActivation::Tanh, actor.clone()).unwrap(),
        Mlp::from_params(&[2, 1, 1], OutputActivation::Identity, c1.clone()).unwrap(),
        Mlp::from_params(&[2, 1, 1], OutputActivation::Identity, c2.clone()).unwrap(),
        cfg.clone(),
    )
    .unwrap();
    let mut script = Scripted {
        actor: actor.clone(),
        actor_t: actor,
        critics: [c1.clone(), c2.clone()],
        critics_t: [c1, c2],
        opt_actor: Adam::new(4),
        opt_critics: [Adam::new(5), Adam::new(5)],
        updates: 0,
    };
    let batches = [
        ([0.5, 1.0, 1.5], [0.2, -0.4, 0.7], [0.3, -0.2, 1.0], [0.7, 1.2, 1.4], [0.0, 0.0, 1.0], [0.1, -0.25, 0.05]),
        ([0.9, 0.4, 1.1], [-0.3, 0.5, 0.1], [0.15, 0.4, -1.0], [1.0, 0.6, 1.3], [0.0, 1.0, 0.0], [-0.4, 0.5, 0.2]),
    ];
    for (s, a, r, s2, d, eps) in batches {
        let batch = Batch {
            states: Array2::from_shape_vec((3, 1), s.to_vec()).unwrap(),
            actions: Array2::from_shape_vec((3, 1), a.to_vec()).unwrap(),
            rewards: Array1::from(r.to_vec()),
            next_states: Array2::from_shape_vec((3, 1), s2.to_vec()).unwrap(),
            dones: Array1::from(d.to_vec()),
        };
        let noise = Array2::from_shape_vec((3, 1), eps.to_vec()).unwrap();
        agent.update_with(&batch, &noise).unwrap();
        script.update(&s, &a, &r, &s2, &d, &eps, &cfg);
    }
    let (q1, q2) = agent.critics();
    let (q1t, q2t) = agent.critic_targets();
    let pairs: [(&[f64], &[f64]); 6] = [
        (agent.actor().params(), &script.actor),
        (agent.actor_target().params(), &script.actor_t),
        (q1.params(), &script.critics[0]),
        (q2.params(), &script.critics[1]),
        (q1t.params(), &script.critics_t[0]),
        (q2t.params(), &script.critics_t[1]),
    ];
    let worst = pairs
        .iter()
        .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    let actor_moved = script.actor.iter().zip([0.8, 0.3, -0.6, 0.1]).any(|(a, b)| (a - b).abs() > 1e-6);
    outcome(
        worst < TD3_TOL && actor_moved && agent.updates() == 2,
        format!("max parameter difference {worst:.2e} after two updates, actor updated: {actor_moved}"),
    )
}

// ---------------------------------------------------------------------------
// 3. Ray casting
// ---------------------------------------------------------------------------

fn ray_cast_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut res = 0.0;
    for (k, fixture) in [Fixture::Annulus, Fixture::AutLike].into_iter().enumerate() {
        let map = fixture.build();
        res = map.resolution();
        let (w, h) = map.extent();
        let o = map.origin();
        let max_range = 10.0;
        let mut done = 0;
        while done < RAY_SAMPLES / 2 + k * (RAY_SAMPLES % 2) {
            let (x, y) = (o[0] + rng.gen_range(0.0..w), o[1] + rng.gen_range(0.0..h));
            if map.is_occupied(x, y) {
                continue;
            }
            let angle = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            let got = cast_ray(&map, x, y, angle, max_range).unwrap();
            let step = res / 200.0;
            let mut t = 0.0;
            let marched = loop {
                t += step;
                if t >= max_range {
                    break max_range;
                }
                let (px, py) = (x + t * angle.cos(), y + t * angle.sin());
                match map.cell_at(px, py) {
                    None => break max_range,
                    Some(rc) if map.grid()[rc] => break t,
                    Some(_) => {}
                }
            };
            worst = worst.max((got - marched).abs());
            done += 1;
        }
    }
    outcome(worst <= res, format!("max |cast − march| {worst:.4} m over {RAY_SAMPLES} rays (resolution {res} m)"))
}

// ---------------------------------------------------------------------------
// 4. Speed profile against dynamic programming
// ---------------------------------------------------------------------------

/// Value iteration over speeds quantised to `dv`. Each point holds the
/// largest grid speed under its lateral cap that can be reached from both
/// neighbours' current values, the friction budget taken at the point itself.
/// All points update together until nothing changes.
fn value_iteration_speeds(kappa: &[f64], ds: &[f64], p: &VehicleParams, dv: f64) -> Vec<f64> {
    let n = kappa.len();
    let accel = |k: f64, v: f64| {
        let lat = k.abs() * v * v / (p.mu * G);
        p.a_max * (1.0 - lat * lat).max(0.0).sqrt()
    };
    let admissible = |i: usize, x: f64, v: &[f64]| {
        let budget = |d: f64| x * x - 2.0 * accel(kappa[i], x) * d;
        let lateral = kappa[i].abs() * x * x <= p.mu * G + 1e-12 && x <= p.v_max + 1e-12;
        let from_prev = i == 0 || budget(ds[i - 1]) <= v[i - 1] * v[i - 1] + 1e-12;
        let from_next = i + 1 == n || budget(ds[i]) <= v[i + 1] * v[i + 1] + 1e-12;
        lateral && from_prev && from_next
    };
    let top = (p.v_max / dv).round() as i64;
    let mut level = vec![top; n];
    loop {
        let v: Vec<f64> = level.iter().map(|&l| l as f64 * dv).collect();
        let next: Vec<i64> = (0..n)
            .map(|i| {
                let mut l = level[i];
                while l > 0 && !admissible(i, l as f64 * dv, &v) {
                    l -= 1;
                }
                l
            })
            .collect();
        if next == level {
            return v;
        }
        level = next;
    }
}

fn speed_profile_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params = VehicleParams {
        v_max: 6.0,
        v_min: 0.5,
        ..VehicleParams::default()
    };
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = 60;
        let ds: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(0.1..0.2)).collect();
        let (a1, a2, f1, f2) = (rng.gen_range(0.0..1.5), rng.gen_range(0.0..1.0), rng.gen_range(0.1..0.6), rng.gen_range(0.6..1.5));
        let kappa: Vec<f64> = (0..n).map(|i| a1 * (f1 * i as f64).sin() + a2 * (f2 * i as f64).cos()).collect();
        let mut cum = vec![0.0];
        for d in &ds {
            cum.push(cum.last().unwrap() + d);
        }
        let fb = speed_profile(&kappa, &cum, None, &params).unwrap();
        let oracle = value_iteration_speeds(&kappa, &ds, &params, 0.01);
        worst = worst.max(fb.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    // closed circle of radius 2 m, well under the speed cap
    let kappa = vec![0.5; 126];
    let cum: Vec<f64> = (0..126).map(|i| i as f64 * 0.1).collect();
    let circle = speed_profile(&kappa, &cum, Some(12.6), &params).unwrap();
    let expect = (params.mu * G / 0.5).sqrt();
    let circle_err = circle.iter().map(|v| (v - expect).abs()).fold(0.0, f64::max);
    outcome(
        worst < SPEED_DP_TOL && circle_err < 1e-9,
        format!("max |forward-backward − value iteration| {worst:.4} m/s over 20 profiles; circle error {circle_err:.1e} m/s vs √(μg/κ) = {expect:.4}"),
    )
}

// ---------------------------------------------------------------------------
// 5. Minimum curvature against offset search
// ---------------------------------------------------------------------------

/// Seven-point 90° left corner with inward-positive normals.
fn corner_fixture() -> (Vec<Point>, Vec<Point>) {
    let d = std::f64::consts::FRAC_1_SQRT_2;
    let base = vec![
        Point::new(-1.8, 0.0),
        Point::new(-1.2, 0.0),
        Point::new(-0.6, 0.0),
        Point::new(0.0, 0.0),
        Point::new(0.0, 0.6),
        Point::new(0.0, 1.2),
        Point::new(0.0, 1.8),
    ];
    let normals = vec![
        Point::new(0.0, 1.0),
        Point::new(0.0, 1.0),
        Point::new(0.0, 1.0),
        Point::new(-d, d),
        Point::new(-1.0, 0.0),
        Point::new(-1.0, 0.0),
        Point::new(-1.0, 0.0),
    ];
    (base, normals)
}

/// Exhaustive search of every offset combination on a grid, repeated on
/// finer grids around the incumbent.
fn grid_search(objective: &dyn Fn(&[f64]) -> f64, lo: f64, hi: f64, n: usize) -> (Vec<f64>, f64) {
    let mut center = vec![0.0; n];
    let mut best = (center.clone(), f64::INFINITY);
    for (step, reach) in [(0.05, 6i64), (0.01, 5), (0.002, 5), (0.0004, 5)] {
        let width = (2 * reach + 1) as usize;
        let mut alpha = vec![0.0; n];
        for code in 0..width.pow(n as u32) {
            let mut c = code;
            for i in 0..n {
                let k = (c % width) as i64 - reach;
                c /= width;
                alpha[i] = (center[i] + k as f64 * step).clamp(lo, hi);
            }
            let f = objective(&alpha);
            if f < best.1 {
                best = (alpha.clone(), f);
            }
        }
        center = best.0.clone();
    }
    best
}

fn min_curvature_oracle() -> Outcome {
    let (base, normals) = corner_fixture();
    let n = base.len();
    let half = 0.3;
    let (lo, hi) = (vec![-half; n], vec![half; n]);
    let options = MinCurvatureOptions {
        max_iterations: 50,
        tolerance: 1e-6,
    };
    let qp = optimise_offsets(&base, &normals, &lo, &hi, false, &options).unwrap();
    let qp_obj = curvature_objective(&offset_points(&base, &normals, &qp.offsets), false);
    let objective = |alpha: &[f64]| curvature_objective(&offset_points(&base, &normals, alpha), false);
    let (_, best) = grid_search(&objective, -half, half, n);
    let ratio = qp_obj / best;
    let within = qp.offsets.iter().all(|&a| a.abs() <= half + 1e-9);
    outcome(
        ratio <= CURVATURE_RATIO_TOL && within,
        format!("QP Σκ² {qp_obj:.5} vs exhaustive search {best:.5} (ratio {ratio:.4}) on a {n}-point corner; offsets within bounds: {within}"),
    )
}

// ---------------------------------------------------------------------------
// 6. Classical planner
// ---------------------------------------------------------------------------

fn classic_completion() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for map in ["annulus", "rounded_rectangle", "aut"] {
        let mut config = ExperimentConfig::default();
        config.vehicle.v_max = CLASSIC_V_MAX;
        let track = Track::load(map).unwrap();
        let raceline = track.raceline(&config.vehicle, &config.raceline).unwrap();
        let predicted = raceline.launch_lap_time(&config.vehicle, config.vehicle.v_min).unwrap();
        let mut env = track.env(&raceline, &config, false, 1).unwrap();
        let (summary, _) = run_evaluation(&mut ClassicPolicy, &mut env, CLASSIC_LAPS, false).unwrap();
        let completed = summary.completed();
        let lap = summary.mean_lap_time_s.unwrap_or(f64::NAN);
        let err = (lap - predicted).abs() / predicted;
        let ok = completed == CLASSIC_LAPS && err < LAP_TIME_REL_TOL;
        pass &= ok;
        details.push(format!("{map} {completed}/{CLASSIC_LAPS} laps, {lap:.2} s vs {predicted:.2} s ({:.1}%)", 100.0 * err));
    }
    outcome(pass, details.join("; "))
}

// ---------------------------------------------------------------------------
// 7. Rewards
// ---------------------------------------------------------------------------

fn reward_identities() -> Outcome {
    let params = VehicleParams::default();
    let cfg = RewardConfig::default();
    let classic = ControlAction::new(0.1, 4.0);
    let same = reward_tal(&classic, &classic, &params, &cfg);
    let far = reward_tal(&ControlAction::new(0.1, 7.0), &classic, &params, &cfg);
    let partial = reward_tal(&ControlAction::new(0.2, 4.5), &classic, &params, &cfg);
    let base = reward_baseline(params.v_max, 0.0, 0.0, params.v_max);
    let pass = same == 0.2 && far == 0.0 && (partial - 0.2 * 0.4).abs() < 1e-12 && base == 1.0;
    outcome(pass, format!("TAL(equal) = {same}, TAL(|Δv| = 3) = {far}, TAL(0.5, 0.1) = {partial:.3}, baseline(v_max, 0, 0) = {base}"))
}

// ---------------------------------------------------------------------------
// 8. Progress trend
// ---------------------------------------------------------------------------

fn progress_trend() -> Outcome {
    let mut base = ExperimentConfig::default();
    base.map = "annulus".into();
    if full_protocol() {
        base.train_steps = 100_000;
        base.seeds = vec![1, 2, 3, 4, 5];
    } else {
        base.train_steps = 30_000;
        base.seeds = vec![1, 2, 3];
    }
    let modes = [RewardKind::Tal, RewardKind::Baseline];
    let cells = MatrixCell::grid(&base, &["annulus".to_string()], &modes, &[4.0, 8.0]);
    let dir = tempfile::tempdir().unwrap();
    let rows = run_matrix(&base, &cells, dir.path(), 1).unwrap();
    let mean = |mode: RewardKind, v: f64| {
        let vals: Vec<f64> = rows
            .iter()
            .filter(|r| r.reward_mode == mode && r.v_max == v)
            .map(|r| r.mean_progress.unwrap_or(0.0))
            .collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    };
    let (tal4, base4, tal8, base8) = (
        mean(RewardKind::Tal, 4.0),
        mean(RewardKind::Baseline, 4.0),
        mean(RewardKind::Tal, 8.0),
        mean(RewardKind::Baseline, 8.0),
    );
    let pass = tal4 > TREND_LOW_SPEED_PROGRESS && base4 > TREND_LOW_SPEED_PROGRESS && tal8 - base8 >= TREND_HIGH_SPEED_MARGIN;
    outcome(
        pass,
        format!(
            "mean evaluation progress at 4 m/s: TAL {tal4:.3}, baseline {base4:.3}; at 8 m/s: TAL {tal8:.3}, baseline {base8:.3} ({} steps, {} seeds)",
            base.train_steps,
            base.seeds.len()
        ),
    )
}

// ---------------------------------------------------------------------------
// 9–10. Speed and slip behaviour at 6 m/s
// ---------------------------------------------------------------------------

#[derive(Default)]
struct Shared {
    profiles: Option<ProfileRuns>,
}

struct ProfileRuns {
    classic: Vec<Vec<TraceRow>>,
    tal: Vec<Vec<TraceRow>>,
    baseline: Vec<Vec<TraceRow>>,
}

fn completed_laps(summary: &talrace::harness::EvalSummary, traces: Vec<Vec<TraceRow>>) -> Vec<Vec<TraceRow>> {
    summary
        .laps
        .iter()
        .zip(traces)
        .filter(|(lap, _)| lap.completed)
        .map(|(_, t)| t)
        .collect()
}

fn profile_runs(shared: &mut Shared) -> &ProfileRuns {
    shared.profiles.get_or_insert_with(|| {
        let mut config = ExperimentConfig::default();
        config.map = "esp".into();
        config.vehicle.v_max = PROFILE_V_MAX;
        config.train_steps = if full_protocol() { 100_000 } else { 30_000 };
        let seed = 1;
        let track = Track::load(&config.map).unwrap();
        let raceline = track.raceline(&config.vehicle, &config.raceline).unwrap();
        let mut env = track.env(&raceline, &config, false, 1).unwrap();
        let (summary, traces) = run_evaluation(&mut ClassicPolicy, &mut env, config.eval_laps, true).unwrap();
        let classic = completed_laps(&summary, traces);
        let agent_laps = |kind: RewardKind| {
            let mut c = config.clone();
            c.reward.kind = kind;
            let run = run_training(&c, &track, &raceline, seed, None).unwrap();
            let mut env = track.env(&raceline, &c, false, 2).unwrap();
            let (summary, traces) =
                run_evaluation(&mut AgentPolicy { agent: &run.agent }, &mut env, c.eval_laps, true).unwrap();
            completed_laps(&summary, traces)
        };
        let tal = agent_laps(RewardKind::Tal);
        let baseline = agent_laps(RewardKind::Baseline);
        ProfileRuns { classic, tal, baseline }
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Speed of a lap trace at arc length `s`, linearly interpolated.
fn speed_at(trace: &[TraceRow], s: f64) -> f64 {
    let i = trace.partition_point(|r| r.s_m < s);
    if i == 0 {
        return trace[0].v_mps;
    }
    if i == trace.len() {
        return trace[i - 1].v_mps;
    }
    let (a, b) = (&trace[i - 1], &trace[i]);
    let f = (s - a.s_m) / (b.s_m - a.s_m).max(1e-12);
    a.v_mps + f * (b.v_mps - a.v_mps)
}

/// Lap trace with arc length unwrapped so it increases through the lap.
fn unwrapped(trace: &[TraceRow], length: f64) -> Vec<TraceRow> {
    let mut out: Vec<TraceRow> = trace.to_vec();
    let mut offset = 0.0;
    for i in 1..out.len() {
        if trace[i].s_m + offset < out[i - 1].s_m - length / 2.0 {
            offset += length;
        }
        out[i].s_m = trace[i].s_m + offset;
    }
    out
}

fn speed_mimicry(shared: &mut Shared) -> Outcome {
    let runs = profile_runs(shared);
    let (Some(classic), Some(tal)) = (runs.classic.first(), runs.tal.first()) else {
        return outcome(
            false,
            format!("need a completed lap from each planner: classic {}, TAL {}", runs.classic.len(), runs.tal.len()),
        );
    };
    let length = Track::load("esp").unwrap().centerline.total_length();
    let classic = unwrapped(classic, length);
    let tal = unwrapped(tal, length);
    let profile = export_speed_slip_profile(&tal).unwrap();
    let agent_v: Vec<f64> = profile.iter().map(|r| r.v_mps).collect();
    let classic_v: Vec<f64> = profile.iter().map(|r| speed_at(&classic, r.s_m)).collect();
    let corr = pearson(&agent_v, &classic_v);

    let classic_std = mean(&runs.classic.iter().map(|t| std_dev(&t.iter().map(|r| r.v_mps).collect::<Vec<_>>())).collect::<Vec<_>>());
    let baseline_std = if runs.baseline.is_empty() {
        f64::NAN
    } else {
        mean(&runs.baseline.iter().map(|t| std_dev(&t.iter().map(|r| r.v_mps).collect::<Vec<_>>())).collect::<Vec<_>>())
    };
    let pass = corr > MIMICRY_MIN_CORRELATION && baseline_std < classic_std;
    outcome(
        pass,
        format!(
            "TAL/classic speed correlation {corr:.3}; speed std baseline {baseline_std:.3} vs classic {classic_std:.3} m/s ({} baseline laps)",
            runs.baseline.len()
        ),
    )
}

fn slip_ordering(shared: &mut Shared) -> Outcome {
    let runs = profile_runs(shared);
    let slip = |laps: &[Vec<TraceRow>]| {
        if laps.is_empty() {
            f64::NAN
        } else {
            median(laps.iter().flatten().map(|r| r.slip_rad.abs().to_degrees()).collect())
        }
    };
    let (c, t, b) = (slip(&runs.classic), slip(&runs.tal), slip(&runs.baseline));
    outcome(
        c < t && t < b,
        format!(
            "median |β| classic {c:.2}°, TAL {t:.2}°, baseline {b:.2}° over {}/{}/{} completed laps",
            runs.classic.len(),
            runs.tal.len(),
            runs.baseline.len()
        ),
    )
}

// ---------------------------------------------------------------------------
// 11. Determinism
// ---------------------------------------------------------------------------

fn determinism() -> Outcome {
    let mut config = ExperimentConfig::default();
    config.train_steps = 5_000;
    let track = Track::load(&config.map).unwrap();
    let raceline = track.raceline(&config.vehicle, &config.raceline).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_training(&config, &track, &raceline, 7, Some(&a)).unwrap();
    run_training(&config, &track, &raceline, 7, Some(&b)).unwrap();
    let files = list_files(&a);
    let differing: Vec<&String> = files
        .iter()
        .filter(|f| std::fs::read(a.join(f)).ok() != std::fs::read(b.join(f)).ok())
        .collect();
    let same_listing = list_files(&b) == files;
    outcome(
        differing.is_empty() && same_listing && !files.is_empty(),
        format!("{} files compared after {} steps, {} differ", files.len(), config.train_steps, differing.len()),
    )
}

fn list_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map(|it| it.filter_map(|e| e.ok()).map(|e| e.file_name().to_string_lossy().into_owned()).collect())
        .unwrap_or_default();
    names.sort();
    names
}
