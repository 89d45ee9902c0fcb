use talrace::env::RewardKind;
use talrace::harness::{
    evaluate_cell, progress_band, read_results, run_matrix, run_training, CellStatus, ExperimentConfig, MatrixCell, Track,
    TrainingCurve,
};
use talrace::td3::Td3Agent;

fn small_config() -> ExperimentConfig {
    let mut c = ExperimentConfig {
        map: "annulus".into(),
        train_steps: 1500,
        eval_laps: 2,
        seeds: vec![1],
        ..ExperimentConfig::default()
    };
    c.td3.warmup_steps = 300;
    c.td3.hidden = vec![32, 32];
    c.td3.batch_size = 32;
    c
}

#[test]
fn training_writes_artifacts_that_reload() {
    let config = small_config();
    let dir = tempfile::tempdir().unwrap();
    let track = Track::load(&config.map).unwrap();
    let raceline = track.raceline(&config.vehicle, &config.raceline).unwrap();
    let run = run_training(&config, &track, &raceline, 1, Some(dir.path())).unwrap();
    assert!(!run.curve.is_empty());

    for name in ["curve.csv", "agent.json", "config.toml", "status.json"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    let status: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("status.json")).unwrap()).unwrap();
    assert_eq!(status["status"], "ok");
    assert_eq!(status["steps_completed"], 1500);

    let curve = TrainingCurve::read_csv(&dir.path().join("curve.csv")).unwrap();
    assert_eq!(curve, run.curve);
    let reloaded = ExperimentConfig::load(&dir.path().join("config.toml")).unwrap();
    assert_eq!(reloaded, config);

    let agent = Td3Agent::load(&dir.path().join("agent.json")).unwrap();
    let obs = vec![0.3; agent.state_dim()];
    assert_eq!(agent.act(&obs).unwrap(), run.agent.act(&obs).unwrap());

    let a = evaluate_cell(&config, &track, &raceline, &agent, 1, Some(dir.path())).unwrap();
    let b = evaluate_cell(&config, &track, &raceline, &run.agent, 1, None).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.laps.len(), 2);
    assert!(dir.path().join("eval_summary.json").exists());
}

#[test]
fn matrix_runs_every_cell_and_records_results() {
    let config = small_config();
    let dir = tempfile::tempdir().unwrap();
    let cells = MatrixCell::grid(&config, &["annulus".into()], &[RewardKind::Tal, RewardKind::Baseline], &[3.0]);
    assert_eq!(cells.len(), 2);
    let rows = run_matrix(&config, &cells, dir.path(), 1).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.status == CellStatus::Ok));
    assert_eq!(read_results(&dir.path().join("results.csv")).unwrap(), rows);

    let curves: Vec<TrainingCurve> = cells
        .iter()
        .map(|c| TrainingCurve::read_csv(&dir.path().join("cells").join(c.key()).join("curve.csv")).unwrap())
        .collect();
    let band = progress_band(&curves, 500, 3).unwrap();
    assert!(!band.is_empty());
}
