use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use talrace::env::{write_trace, read_trace, RewardKind, TraceRow};
use talrace::harness::{
    evaluate_cell, export_speed_slip_profile, progress_band, run_evaluation, run_matrix, run_training,
    write_profile, write_progress_band, ClassicPolicy, ExperimentConfig, MatrixCell, Track, TrainingCurve,
};
use talrace::td3::Td3Agent;

/// Trajectory-aided learning for high-speed autonomous racing.
#[derive(Parser, Debug)]
#[command(name = "talrace", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config (TOML with dotted sections).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config value, e.g. `--set vehicle.v_max=6`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Map fixture name or metadata YAML path.
    #[arg(long, global = true)]
    map: Option<String>,
    /// Reward mode: tal or baseline.
    #[arg(long, global = true)]
    reward_mode: Option<String>,
    /// Speed cap (m/s).
    #[arg(long, global = true)]
    v_max: Option<f64>,
    #[arg(long, global = true)]
    train_steps: Option<usize>,
    #[arg(long, global = true)]
    eval_laps: Option<usize>,
    /// Comma-separated master seeds.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, global = true, env = "TALRACE_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the optimal trajectory and write it as CSV.
    Raceline {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the classical planner.
    RaceClassic {
        /// Write one trace and speed/slip profile per lap.
        #[arg(long)]
        traces: bool,
    },
    /// Train one agent per configured seed.
    Train {
        /// Skip the post-training evaluation.
        #[arg(long)]
        no_eval: bool,
    },
    /// Evaluate a saved agent.
    Evaluate {
        #[arg(long)]
        agent: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        traces: bool,
    },
    /// Run a map x reward mode x speed x seed matrix.
    Matrix {
        #[arg(long, value_delimiter = ',', default_value = "annulus")]
        maps: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "tal,baseline")]
        modes: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "4,5,6,7,8")]
        speeds: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Export figure data.
    #[command(subcommand)]
    Export(ExportCommand),
}

#[derive(Subcommand, Debug)]
enum ExportCommand {
    /// Speed and slip profile along the track from an episode trace.
    Profile {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Progress band over repeated training curves.
    Band {
        #[arg(long, required = true, num_args = 1..)]
        curves: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        interval: usize,
        #[arg(long, default_value_t = 10)]
        window: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Raceline { .. } => "raceline",
            Command::RaceClassic { .. } => "race-classic",
            Command::Train { .. } => "train",
            Command::Evaluate { .. } => "evaluate",
            Command::Matrix { .. } => "matrix",
            Command::Export(_) => "export",
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    for item in &common.overrides {
        let (key, value) = item
            .split_once('=')
            .with_context(|| format!("override `{item}` is not KEY=VALUE"))?;
        config.set(key.trim(), value.trim())?;
    }
    if let Some(map) = &common.map {
        config.map = map.clone();
    }
    if let Some(mode) = &common.reward_mode {
        config.reward.kind = parse_mode(mode)?;
    }
    if let Some(v) = common.v_max {
        config.vehicle.v_max = v;
    }
    if let Some(n) = common.train_steps {
        config.train_steps = n;
    }
    if let Some(n) = common.eval_laps {
        config.eval_laps = n;
    }
    if let Some(seeds) = &common.seeds {
        config.seeds = seeds.clone();
    }
    if let Some(dir) = &common.output_dir {
        config.output_dir = dir.clone();
    }
    config.validate()?;
    Ok(config)
}

fn parse_mode(name: &str) -> Result<RewardKind> {
    match RewardKind::from_name(name) {
        Some(kind) => Ok(kind),
        None => bail!("unknown reward mode `{name}` (expected tal or baseline)"),
    }
}

fn save_traces(dir: &Path, traces: &[Vec<TraceRow>]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, trace) in traces.iter().enumerate() {
        write_trace(trace, BufWriter::new(File::create(dir.join(format!("trace_{i:03}.csv")))?))?;
        if !trace.is_empty() {
            write_profile(&dir.join(format!("profile_{i:03}.csv")), &export_speed_slip_profile(trace)?)?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<Value> {
    if let Command::Export(cmd) = &cli.command {
        return export(cmd);
    }
    let config = load_config(&cli.common)?;
    std::fs::create_dir_all(&config.output_dir)
        .with_context(|| format!("creating {}", config.output_dir.display()))?;

    match cli.command {
        Command::Raceline { out } => {
            let track = Track::load(&config.map)?;
            let raceline = track.raceline(&config.vehicle, &config.raceline)?;
            let out = out.unwrap_or_else(|| config.output_dir.join(format!("{}_raceline.csv", track.name)));
            std::fs::write(&out, raceline.to_csv())?;
            Ok(json!({
                "map": track.name,
                "points": raceline.len(),
                "length_m": raceline.total_length(),
                "lap_time_s": raceline.lap_time(),
                "launch_lap_time_s": raceline.launch_lap_time(&config.vehicle, config.vehicle.v_min)?,
                "output": out,
            }))
        }
        Command::RaceClassic { traces } => {
            let track = Track::load(&config.map)?;
            let raceline = track.raceline(&config.vehicle, &config.raceline)?;
            let mut env = track.env(&raceline, &config, false, 0)?;
            let (summary, recorded) = run_evaluation(&mut ClassicPolicy, &mut env, config.eval_laps, traces)?;
            let dir = config.output_dir.join(format!("{}_classic_v{}", track.name, config.vehicle.v_max));
            std::fs::create_dir_all(&dir)?;
            summary.save(&dir)?;
            if traces {
                save_traces(&dir.join("traces"), &recorded)?;
            }
            Ok(json!({
                "map": track.name,
                "completion_rate": summary.completion_rate,
                "mean_lap_time_s": summary.mean_lap_time_s,
                "mean_progress": summary.mean_progress,
                "predicted_lap_time_s": raceline.launch_lap_time(&config.vehicle, config.vehicle.v_min)?,
                "output": dir,
            }))
        }
        Command::Train { no_eval } => {
            let track = Track::load(&config.map)?;
            let raceline = track.raceline(&config.vehicle, &config.raceline)?;
            let mut runs = Vec::new();
            for &seed in &config.seeds {
                let cell = MatrixCell {
                    map: config.map.clone(),
                    reward_mode: config.reward.kind,
                    v_max: config.vehicle.v_max,
                    seed,
                };
                let dir = config.output_dir.join(cell.key());
                log::info!("training {} into {}", cell.key(), dir.display());
                let run = run_training(&config, &track, &raceline, seed, Some(&dir))?;
                let eval = if no_eval {
                    Value::Null
                } else {
                    serde_json::to_value(evaluate_cell(&config, &track, &raceline, &run.agent, seed, Some(&dir))?)?
                };
                runs.push(json!({
                    "seed": seed,
                    "episodes": run.curve.len(),
                    "final_mean_progress": run.curve.final_mean_progress(10),
                    "evaluation": eval.get("completion_rate").map(|_| json!({
                        "completion_rate": eval["completion_rate"],
                        "mean_lap_time_s": eval["mean_lap_time_s"],
                        "mean_progress": eval["mean_progress"],
                    })),
                    "output": dir,
                }));
            }
            Ok(json!({ "map": track.name, "runs": runs }))
        }
        Command::Evaluate { agent, seed, traces } => {
            let track = Track::load(&config.map)?;
            let raceline = track.raceline(&config.vehicle, &config.raceline)?;
            let agent = Td3Agent::load(&agent).with_context(|| format!("loading {}", agent.display()))?;
            let dir = config.output_dir.join(format!("{}_eval_s{seed}", track.name));
            let summary = if traces {
                let mut env = track.env(&raceline, &config, false, seed)?;
                let mut policy = talrace::harness::AgentPolicy { agent: &agent };
                let (summary, recorded) = run_evaluation(&mut policy, &mut env, config.eval_laps, true)?;
                std::fs::create_dir_all(&dir)?;
                summary.save(&dir)?;
                save_traces(&dir.join("traces"), &recorded)?;
                summary
            } else {
                evaluate_cell(&config, &track, &raceline, &agent, seed, Some(&dir))?
            };
            Ok(json!({
                "map": track.name,
                "completion_rate": summary.completion_rate,
                "mean_lap_time_s": summary.mean_lap_time_s,
                "mean_progress": summary.mean_progress,
                "output": dir,
            }))
        }
        Command::Matrix { maps, modes, speeds, workers } => {
            let modes = modes.iter().map(|m| parse_mode(m)).collect::<Result<Vec<_>>>()?;
            let cells = MatrixCell::grid(&config, &maps, &modes, &speeds);
            let rows = run_matrix(&config, &cells, &config.output_dir, workers)?;
            let failed = rows.iter().filter(|r| r.completion_rate.is_none()).count();
            Ok(json!({
                "cells": rows.len(),
                "failed": failed,
                "results": config.output_dir.join("results.csv"),
            }))
        }
        Command::Export(_) => unreachable!("handled above"),
    }
}

fn export(cmd: &ExportCommand) -> Result<Value> {
    match cmd {
        ExportCommand::Profile { trace, out } => {
            let bytes = std::fs::read(trace).with_context(|| format!("reading {}", trace.display()))?;
            let rows = export_speed_slip_profile(&read_trace(&bytes)?)?;
            write_profile(out, &rows)?;
            Ok(json!({ "rows": rows.len(), "output": out }))
        }
        ExportCommand::Band { curves, out, interval, window } => {
            let loaded = curves
                .iter()
                .map(|p| TrainingCurve::read_csv(p).with_context(|| format!("reading {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            let rows = progress_band(&loaded, *interval, *window)?;
            write_progress_band(out, &rows)?;
            Ok(json!({ "rows": rows.len(), "output": out }))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let command = cli.command.name();
    match run(cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&json!({ "status": "ok", "command": command, "result": summary })).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(err) => {
            let causes: Vec<String> = err.chain().skip(1).map(|c| c.to_string()).collect();
            let summary = json!({ "status": "error", "command": command, "error": err.to_string(), "causes": causes });
            eprintln!("{}", serde_json::to_string(&summary).unwrap_or_default());
            ExitCode::FAILURE
        }
    }
}
