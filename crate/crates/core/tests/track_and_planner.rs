use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use talrace::dynamics::VehicleParams;
use talrace::harness::{run_evaluation, ClassicPolicy, ExperimentConfig, Track};
use talrace::lidar::{scan, LidarConfig};
use talrace::raceline::{RaceTrajectory, RacelineConfig};
use talrace::track::fixtures::Fixture;
use talrace::track::{extract_centerline, ExtractOptions, TrackMap};

#[test]
fn saved_map_loads_back_identically() {
    let dir = tempfile::tempdir().unwrap();
    let map = Fixture::Annulus.build();
    let yaml = dir.path().join("ring.yaml");
    map.save(&yaml).unwrap();
    let loaded = TrackMap::load_from_files(&yaml).unwrap();
    assert_eq!(loaded.grid(), map.grid());
    assert_eq!(loaded.resolution(), map.resolution());
    assert_eq!(loaded.origin(), map.origin());

    let track = Track::load(yaml.to_str().unwrap()).unwrap();
    assert_eq!(track.name, "ring");
}

#[test]
fn annulus_centerline_is_the_mid_circle() {
    let map = Fixture::Annulus.build();
    let c = extract_centerline(&map, &ExtractOptions::default()).unwrap();
    let expect = 2.0 * PI * 4.5;
    assert!((c.total_length() - expect).abs() / expect < 0.02, "{}", c.total_length());
    for p in c.points() {
        let r = p.x.hypot(p.y);
        assert!((r - 4.5).abs() < 0.1, "radius {r}");
    }
    for (l, r) in c.width_left().iter().zip(c.width_right()) {
        assert!((l - 0.5).abs() < 0.1 && (r - 0.5).abs() < 0.1);
    }
}

#[test]
fn raceline_bends_less_than_centerline_and_respects_limits() {
    let params = VehicleParams::default();
    for fixture in [Fixture::RoundedRectangle, Fixture::AutLike] {
        let track = Track::load(fixture.name()).unwrap();
        let raceline = track.raceline(&params, &RacelineConfig::default()).unwrap();
        assert!(raceline.check_limits(&params, 1e-6).is_empty());
        assert!(raceline.check_bounds(&track.centerline, params.width / 2.0).is_empty());

        let centre = RaceTrajectory::from_path(track.centerline.points().to_vec(), true, &params).unwrap();
        let bending = |t: &RaceTrajectory| t.curvature().iter().map(|k| k * k).sum::<f64>() * t.total_length() / t.len() as f64;
        assert!(bending(&raceline) < bending(&centre), "{}: {} vs {}", fixture.name(), bending(&raceline), bending(&centre));

        let back = RaceTrajectory::from_csv(raceline.to_csv().as_bytes(), true).unwrap();
        assert_eq!(back.len(), raceline.len());
        for (a, b) in back.v_ref().iter().zip(raceline.v_ref()) {
            assert!((a - b).abs() <= 5e-7);
        }
    }
}

#[test]
fn lidar_noise_has_the_configured_spread() {
    let map = Fixture::Annulus.build();
    let exact = LidarConfig {
        noise_sigma: 0.0,
        ..LidarConfig::default()
    };
    let noisy = LidarConfig {
        noise_sigma: 0.01,
        ..LidarConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let truth = scan(&map, 4.5, 0.0, PI / 2.0, &exact, &mut rng).unwrap().beams;
    let n = 10_000;
    let mut sum = vec![0.0; truth.len()];
    let mut sq = vec![0.0; truth.len()];
    for _ in 0..n {
        let s = scan(&map, 4.5, 0.0, PI / 2.0, &noisy, &mut rng).unwrap();
        for (i, (b, t)) in s.beams.iter().zip(&truth).enumerate() {
            sum[i] += b - t;
            sq[i] += (b - t) * (b - t);
        }
    }
    for i in 0..truth.len() {
        let mean = sum[i] / n as f64;
        let std = (sq[i] / n as f64 - mean * mean).sqrt();
        assert!(mean.abs() < 4.0 * 0.01 / (n as f64).sqrt(), "beam {i} mean {mean}");
        assert!((std - 0.01).abs() < 0.0005, "beam {i} std {std}");
    }
}

#[test]
fn classic_planner_laps_deterministically() {
    let mut config = ExperimentConfig {
        map: "rounded_rectangle".into(),
        ..ExperimentConfig::default()
    };
    config.vehicle.v_max = 6.0;
    let track = Track::load(&config.map).unwrap();
    let raceline = track.raceline(&config.vehicle, &config.raceline).unwrap();
    let run = || {
        let mut env = track.env(&raceline, &config, false, 3).unwrap();
        run_evaluation(&mut ClassicPolicy, &mut env, 2, true).unwrap()
    };
    let (a, ta) = run();
    let (b, tb) = run();
    assert_eq!(a.completion_rate, 1.0);
    assert_eq!(a, b);
    assert_eq!(ta, tb);
    let predicted = raceline.launch_lap_time(&config.vehicle, config.vehicle.v_min).unwrap();
    let lap = a.mean_lap_time_s.unwrap();
    assert!((lap - predicted).abs() / predicted < 0.05, "{lap} vs {predicted}");
}
