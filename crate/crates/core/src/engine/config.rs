use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::TrainConfig;
use crate::error::{Error, Result};
use crate::metrics::{RssParams, SafetyRequirement};
use crate::param_space::{reference_parameters, ParameterSpace, ParameterSpec};
use crate::reward::RewardConfig;
use crate::sim::{SutConfig, WorldConfig};

/// Number of scenario parameters the simulator consumes.
pub const SCENARIO_ARITY: usize = 5;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    /// Output directory; the CLI `--out` flag overrides it.
    pub out_dir: Option<PathBuf>,
    /// Store every episode's trace, not only the best one.
    pub save_traces: bool,
}

/// Full configuration of a falsification or baseline run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub world: WorldConfig<f64>,
    pub sut: SutConfig<f64>,
    pub rss: RssParams<f64>,
    pub requirement: SafetyRequirement<f64>,
    pub reward: RewardConfig<f64>,
    pub train: TrainConfig,
    pub parameters: Vec<ParameterSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            run: RunSection::default(),
            world: WorldConfig::default(),
            sut: SutConfig::default(),
            rss: RssParams::default(),
            requirement: SafetyRequirement::default(),
            reward: RewardConfig::default(),
            train: TrainConfig::default(),
            parameters: reference_parameters(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    /// Checks every section against its invariants.
    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.sut.validate()?;
        self.rss.validate()?;
        self.requirement.validate()?;
        self.reward.validate()?;
        self.train.validate()?;
        if self.parameters.len() != SCENARIO_ARITY {
            return Err(Error::config(
                "parameters",
                format!("expected {SCENARIO_ARITY} parameters, got {}", self.parameters.len()),
            ));
        }
        for p in &self.parameters {
            p.validate()?;
        }
        Ok(())
    }

    /// Checks that every weather bin of the space names a preset with a multiplier.
    pub fn validate_space(&self, space: &ParameterSpace<f64>) -> Result<()> {
        let weather = &space.bins()[SCENARIO_ARITY - 1];
        for &w in weather {
            self.sut.weather_mult(w)?;
        }
        Ok(())
    }
}
