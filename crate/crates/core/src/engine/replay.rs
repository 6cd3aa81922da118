//! Deterministic re-execution of a logged or user-supplied scenario.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::metrics::{classify_timesteps, per_step_min_distance, stl_satisfied, RiskProfile};
use crate::param_space::{ConcreteScenario, ParameterSpace};
use crate::reward::{total_reward, RewardBreakdown};
use crate::sim::{run_episode, Trace};

use super::artifacts::{read_bins, read_episodes, read_snapshot, BINS_CSV, EPISODES_CSV};
use super::config::RunConfig;
use super::runner::build_space;
use super::seeds::{derive_seed, Stream};

#[derive(Clone, Debug, PartialEq)]
pub struct Replay {
    pub scenario: ConcreteScenario<f64>,
    pub trace: Trace<f64>,
    pub d_min: Vec<f64>,
    pub profile: RiskProfile<f64>,
    pub reward: RewardBreakdown<f64>,
    pub stl_satisfied: bool,
}

impl Replay {
    pub const EXTENDED_HEADER: [&'static str; 10] = [
        "t",
        "ego_x",
        "ego_speed",
        "ped_x",
        "ped_y",
        "dist",
        "detected",
        "braking",
        "rss_d_min",
        "high_risk",
    ];

    /// Trace columns plus the per-step RSS minimum distance and high-risk flag.
    pub fn write_extended_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::EXTENDED_HEADER)?;
        for ((s, d), hr) in self.trace.steps.iter().zip(&self.d_min).zip(&self.profile.flags) {
            w.write_record([
                s.t.to_string(),
                s.ego_x.to_string(),
                s.ego_speed.to_string(),
                s.ped_x.to_string(),
                s.ped_y.to_string(),
                s.euclid_dist.to_string(),
                s.detected.to_string(),
                s.braking.to_string(),
                d.to_string(),
                hr.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<replay csv>", e))
    }
}

pub fn replay_scenario(cfg: &RunConfig, scenario: ConcreteScenario<f64>) -> Result<Replay> {
    let trace = run_episode(&scenario, &cfg.world, &cfg.sut, &cfg.requirement)?;
    let d_min = per_step_min_distance(&trace, &cfg.rss)?;
    let profile = classify_timesteps(&trace, &cfg.rss)?;
    let reward = total_reward(&trace, &profile, &cfg.reward)?;
    Ok(Replay {
        stl_satisfied: stl_satisfied(&trace, &cfg.requirement),
        scenario,
        trace,
        d_min,
        profile,
        reward,
    })
}

/// Config and frozen space of a finished run.
pub fn load_run(run_dir: &Path) -> Result<(RunConfig, ParameterSpace<f64>)> {
    let cfg = read_snapshot(run_dir)?;
    let space = read_bins(&run_dir.join(BINS_CSV), &cfg.parameters, derive_seed(cfg.run.seed, Stream::Bins))?;
    Ok((cfg, space))
}

pub fn replay_episode(run_dir: &Path, episode: usize) -> Result<Replay> {
    let (cfg, space) = load_run(run_dir)?;
    let logs = read_episodes(&run_dir.join(EPISODES_CSV))?;
    let log = logs
        .iter()
        .find(|l| l.episode == episode)
        .ok_or_else(|| Error::Validation(format!("run has no episode {episode} ({} logged)", logs.len())))?;
    replay_scenario(&cfg, space.decode(&log.indices)?)
}

/// Scenario file: JSON with exactly one of `indices` or `values`.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub indices: Option<Vec<usize>>,
    pub values: Option<Vec<f64>>,
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Validation(format!("scenario file {}: {e}", path.display())))
    }

    /// Resolves the file against the space; values must match bins exactly.
    pub fn resolve(&self, space: &ParameterSpace<f64>) -> Result<ConcreteScenario<f64>> {
        let indices = match (&self.indices, &self.values) {
            (Some(i), None) => i.clone(),
            (None, Some(v)) => space
                .encode(v)
                .map_err(|e| Error::Validation(format!("scenario values do not match the space: {e}")))?,
            _ => return Err(Error::Validation("scenario file needs exactly one of `indices` or `values`".into())),
        };
        if indices.len() != space.len() {
            return Err(Error::Validation(format!(
                "scenario has {} indices, space has {} parameters",
                indices.len(),
                space.len()
            )));
        }
        space.decode(&indices).map_err(|e| Error::Validation(e.to_string()))
    }
}

pub fn replay_file(scenario_file: &Path, cfg: &RunConfig) -> Result<Replay> {
    let space = build_space(cfg)?;
    let scenario = ScenarioFile::load(scenario_file)?.resolve(&space)?;
    replay_scenario(cfg, scenario)
}
