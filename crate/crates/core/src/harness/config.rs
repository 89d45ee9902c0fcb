use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::dynamics::VehicleParams;
use crate::env::{EnvConfig, RewardConfig, RewardKind};
use crate::lidar::LidarConfig;
use crate::pursuit::PursuitConfig;
use crate::raceline::RacelineConfig;
use crate::td3::Td3Config;

/// Everything one experiment needs. Serialised as TOML with one section per
/// module, so single values can be addressed by dotted keys such as
/// `vehicle.v_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Fixture name (`annulus`, `rounded_rectangle`, `aut`, `esp`) or path
    /// to a map metadata YAML file.
    pub map: String,
    pub train_steps: usize,
    /// Master seeds, one per repeat.
    pub seeds: Vec<u64>,
    pub eval_laps: usize,
    pub output_dir: PathBuf,
    /// Random start positions during training; evaluation always starts
    /// at s = 0.
    pub train_random_start: bool,
    /// Simulated time allowed beyond one lap at minimum speed (s).
    pub budget_slack: f64,
    pub vehicle: VehicleParams,
    pub lidar: LidarConfig,
    pub pursuit: PursuitConfig,
    pub reward: RewardConfig,
    pub td3: Td3Config,
    pub raceline: RacelineConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            map: "annulus".into(),
            train_steps: 100_000,
            seeds: vec![1, 2, 3, 4, 5],
            eval_laps: 20,
            output_dir: PathBuf::from("runs"),
            train_random_start: true,
            budget_slack: 20.0,
            vehicle: VehicleParams::default(),
            lidar: LidarConfig::default(),
            pursuit: PursuitConfig::default(),
            reward: RewardConfig::default(),
            td3: Td3Config::default(),
            raceline: RacelineConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let config: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn reward_mode(&self) -> RewardKind {
        self.reward.kind
    }

    pub fn repeats(&self) -> usize {
        self.seeds.len()
    }

    pub fn env_config(&self, random_start: bool) -> EnvConfig {
        EnvConfig {
            reward: self.reward,
            random_start,
            budget_slack: self.budget_slack,
            lidar: self.lidar,
            pursuit: self.pursuit,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.eval_laps == 0 {
            return bad("eval_laps must be at least 1".into());
        }
        if self.train_steps <= self.td3.warmup_steps {
            log::warn!(
                "train_steps ({}) does not exceed warm-up ({}): no network updates will run",
                self.train_steps,
                self.td3.warmup_steps
            );
        }
        self.vehicle.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.pursuit.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.td3.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }

    /// Sets one value by dotted key, e.g. `("vehicle.v_max", "6.0")`. The
    /// value is parsed as a TOML literal, falling back to a bare string.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        let mut doc = toml::Value::try_from(&*self).map_err(|e| HarnessError::Config(e.to_string()))?;
        let parsed = parse_literal(value);
        let mut slot = &mut doc;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let table = slot
                .as_table_mut()
                .ok_or_else(|| HarnessError::Config(format!("`{key}`: `{part}` is not a section")))?;
            if i + 1 == parts.len() {
                if !table.contains_key(*part) && !is_optional_key(key) {
                    return Err(HarnessError::Config(format!("unknown config key `{key}`")));
                }
                table.insert((*part).to_string(), parsed.clone());
                break;
            }
            slot = table
                .get_mut(*part)
                .ok_or_else(|| HarnessError::Config(format!("unknown config section in `{key}`")))?;
        }
        let next: Self = doc
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::Config(format!("`{key}` = {value}: {e}")))?;
        next.validate()?;
        *self = next;
        Ok(())
    }
}

// Keys of `Option` fields vanish from the serialised document when unset.
fn is_optional_key(key: &str) -> bool {
    key == "lidar.full_resolution"
}

fn parse_literal(value: &str) -> toml::Value {
    let wrapped = format!("v = {value}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(value.to_string()),
    }
}
