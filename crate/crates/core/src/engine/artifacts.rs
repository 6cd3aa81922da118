//! Run-directory layout and the on-disk records written into it.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param_space::{ParameterSpace, ParameterSpec};
use crate::reward::RewardBreakdown;
use crate::sim::Outcome;

use super::config::RunConfig;

pub const CONFIG_SNAPSHOT: &str = "config.snapshot";
pub const BINS_CSV: &str = "bins.csv";
pub const EPISODES_CSV: &str = "episodes.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const TRACE_DIR: &str = "traces";
pub const BEST_TRACE: &str = "best.csv";
pub const REPORT_DIR: &str = "report";

/// One logged episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    /// `None` marks a faulted simulation.
    pub outcome: Option<Outcome>,
    pub final_dist: f64,
    pub high_risk_count: usize,
    pub total_steps: usize,
    pub second_half_fraction: f64,
    pub reward: RewardBreakdown<f64>,
    pub stl_satisfied: bool,
}

impl EpisodeLog {
    pub fn is_collision(&self) -> bool {
        self.outcome == Some(Outcome::Collision)
    }

    pub fn outcome_label(&self) -> String {
        self.outcome.map_or_else(|| "Fault".to_owned(), |o| o.to_string())
    }
}

pub fn episodes_header(arity: usize) -> Vec<String> {
    let mut h = vec!["episode".to_owned()];
    h.extend((0..arity).map(|k| format!("idx_{k}")));
    h.extend((0..arity).map(|k| format!("val_{k}")));
    h.extend(
        [
            "outcome",
            "final_dist",
            "high_risk_count",
            "total_steps",
            "second_half_fraction",
            "risk_term",
            "distance_term",
            "collision_term",
            "total_reward",
            "stl_satisfied",
        ]
        .map(str::to_owned),
    );
    h
}

/// Streaming writer for `episodes.csv`.
pub struct EpisodeWriter {
    inner: csv::Writer<BufWriter<File>>,
    path: PathBuf,
}

impl EpisodeWriter {
    pub fn create(path: &Path, arity: usize) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut inner = csv::Writer::from_writer(BufWriter::new(file));
        inner.write_record(episodes_header(arity))?;
        Ok(Self {
            inner,
            path: path.to_owned(),
        })
    }

    pub fn write(&mut self, log: &EpisodeLog) -> Result<()> {
        let mut rec = vec![log.episode.to_string()];
        rec.extend(log.indices.iter().map(ToString::to_string));
        rec.extend(log.values.iter().map(ToString::to_string));
        rec.push(log.outcome_label());
        rec.push(log.final_dist.to_string());
        rec.push(log.high_risk_count.to_string());
        rec.push(log.total_steps.to_string());
        rec.push(log.second_half_fraction.to_string());
        rec.push(log.reward.risk_term.to_string());
        rec.push(log.reward.distance_term.to_string());
        rec.push(log.reward.collision_term.to_string());
        rec.push(log.reward.total.to_string());
        rec.push(log.stl_satisfied.to_string());
        self.inner.write_record(rec)?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn parse<T: std::str::FromStr>(field: &str, column: &str, row: usize) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::Validation(format!("episodes.csv row {row}: bad `{column}` value `{field}`")))
}

pub fn read_episodes(path: &Path) -> Result<Vec<EpisodeLog>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_owned()));
    }
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    let arity = header.iter().filter(|h| h.starts_with("idx_")).count();
    if header.iter().collect::<Vec<_>>() != episodes_header(arity) {
        return Err(Error::Validation(format!("{} has an unexpected header", path.display())));
    }
    let mut out = vec![];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let col = |i: usize| &rec[i];
        let base = 1 + 2 * arity;
        let outcome = match col(base) {
            "Fault" => None,
            s => Some(s.parse()?),
        };
        out.push(EpisodeLog {
            episode: parse(col(0), "episode", row)?,
            indices: (0..arity).map(|k| parse(col(1 + k), "idx", row)).collect::<Result<_>>()?,
            values: (0..arity).map(|k| parse(col(1 + arity + k), "val", row)).collect::<Result<_>>()?,
            outcome,
            final_dist: parse(col(base + 1), "final_dist", row)?,
            high_risk_count: parse(col(base + 2), "high_risk_count", row)?,
            total_steps: parse(col(base + 3), "total_steps", row)?,
            second_half_fraction: parse(col(base + 4), "second_half_fraction", row)?,
            reward: RewardBreakdown {
                risk_term: parse(col(base + 5), "risk_term", row)?,
                distance_term: parse(col(base + 6), "distance_term", row)?,
                collision_term: parse(col(base + 7), "collision_term", row)?,
                total: parse(col(base + 8), "total_reward", row)?,
            },
            stl_satisfied: parse(col(base + 9), "stl_satisfied", row)?,
        });
    }
    Ok(out)
}

pub fn write_bins(path: &Path, space: &ParameterSpace<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["parameter", "index", "value"])?;
    for (spec, bins) in space.specs().iter().zip(space.bins()) {
        for (i, v) in bins.iter().enumerate() {
            w.write_record([spec.name.clone(), i.to_string(), v.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_bins(path: &Path, specs: &[ParameterSpec], seed: u64) -> Result<ParameterSpace<f64>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_owned()));
    }
    let mut bins: Vec<Vec<f64>> = vec![vec![]; specs.len()];
    let mut rdr = csv::Reader::from_path(path)?;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let k = specs
            .iter()
            .position(|s| s.name == rec[0])
            .ok_or_else(|| Error::Validation(format!("bins.csv names unknown parameter `{}`", &rec[0])))?;
        let idx: usize = parse(&rec[1], "index", row)?;
        if idx != bins[k].len() {
            return Err(Error::Validation(format!("bins.csv row {row}: indices out of order")));
        }
        bins[k].push(parse(&rec[2], "value", row)?);
    }
    ParameterSpace::from_bins(specs.to_vec(), bins, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestScenario {
    pub episode: usize,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    pub outcome: String,
    pub total_reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// `reinforce` or `random`.
    pub method: String,
    pub seed: u64,
    pub total_episodes: usize,
    pub best: BestScenario,
    pub violating_episodes: usize,
    pub first_violation_episode: Option<usize>,
    pub distinct_violating_scenarios: usize,
    /// Window-100 trailing mean of total reward, one value per episode.
    pub reward_moving_average: Vec<f64>,
    pub convergence_episode: Option<usize>,
    /// Most probable bin per head of the final policy (search runs only).
    pub modal_action: Option<Vec<usize>>,
    pub faulted_episodes: usize,
    pub early_stopped: bool,
    pub wall_time_secs: f64,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_owned()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_summary(run_dir: &Path) -> Result<RunSummary> {
    read_json(&run_dir.join(SUMMARY_JSON))
}

/// Loads the config snapshot of a finished run.
pub fn read_snapshot(run_dir: &Path) -> Result<RunConfig> {
    let path = run_dir.join(CONFIG_SNAPSHOT);
    if !path.exists() {
        return Err(Error::MissingArtifact(path));
    }
    RunConfig::load(&path)
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_log(e: usize, outcome: Option<Outcome>) -> EpisodeLog {
        EpisodeLog {
            episode: e,
            indices: vec![1, 2, 3, 0, 4],
            values: vec![1.25, 0.0123456789012345, 1.1, 3.3, 8.0],
            outcome,
            final_dist: 0.4123456789,
            high_risk_count: 55,
            total_steps: 131,
            second_half_fraction: 0.123,
            reward: RewardBreakdown {
                risk_term: -0.0016,
                distance_term: 0.0095,
                collision_term: 0.25,
                total: 0.2579,
            },
            stl_satisfied: outcome != Some(Outcome::Collision),
        }
    }

    #[test]
    fn episodes_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(EPISODES_CSV);
        let logs = vec![
            sample_log(0, Some(Outcome::Collision)),
            sample_log(1, None),
            sample_log(2, Some(Outcome::StoppedBeforeCrossing)),
        ];
        let mut w = EpisodeWriter::create(&path, 5).unwrap();
        for l in &logs {
            w.write(l).unwrap();
        }
        w.flush().unwrap();
        drop(w);
        assert_eq!(read_episodes(&path).unwrap(), logs);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("episode,idx_0,idx_1,idx_2,idx_3,idx_4,val_0,"));
        assert!(text.lines().next().unwrap().ends_with("total_reward,stl_satisfied"));
    }

    #[test]
    fn bins_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(BINS_CSV);
        let cfg = RunConfig::default();
        let space = ParameterSpace::generate(cfg.parameters.clone(), 3).unwrap();
        write_bins(&path, &space).unwrap();
        assert_eq!(read_bins(&path, &cfg.parameters, 3).unwrap(), space);
    }

    #[test]
    fn missing_artifact_named() {
        let dir = tempfile::tempdir().unwrap();
        match read_episodes(&dir.path().join(EPISODES_CSV)) {
            Err(Error::MissingArtifact(p)) => assert!(p.ends_with(EPISODES_CSV)),
            other => panic!("{other:?}"),
        }
    }
}
