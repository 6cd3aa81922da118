//! CSV bundle exported from a finished run directory.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::artifacts::{ensure_dir, read_episodes, EpisodeLog, EPISODES_CSV, REPORT_DIR};
use super::replay::{load_run, replay_scenario, Replay};
use super::runner::{best_log, moving_average, MA_WINDOW};

pub const REWARD_CSV: &str = "reward.csv";
pub const OVERLAY_CSV: &str = "best_vs_median.csv";
pub const SECOND_HALF_CSV: &str = "second_half.csv";
pub const RECENT_CSV: &str = "recent_scenarios.csv";
pub const RECENT_K: usize = 14;

#[derive(Clone, Debug, PartialEq)]
pub struct SecondHalfRow {
    pub role: &'static str,
    pub episode: usize,
    pub outcome: String,
    pub second_half_fraction: f64,
}

#[derive(Clone, Debug)]
pub struct ReportBundle {
    pub dir: PathBuf,
    pub second_half: Vec<SecondHalfRow>,
    /// Episode of each overlaid recent scenario, oldest first.
    pub recent: Vec<usize>,
}

impl ReportBundle {
    pub fn fraction(&self, role: &str) -> Option<f64> {
        self.second_half.iter().find(|r| r.role == role).map(|r| r.second_half_fraction)
    }
}

/// Lower median by total reward; ties ordered by episode.
pub fn median_log<'a>(logs: impl IntoIterator<Item = &'a EpisodeLog>) -> Option<&'a EpisodeLog> {
    let mut v: Vec<&EpisodeLog> = logs.into_iter().collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.reward.total.total_cmp(&b.reward.total).then(a.episode.cmp(&b.episode)));
    Some(v[(v.len() - 1) / 2])
}

/// Most recent `k` distinct index vectors, each at its latest episode, oldest first.
pub fn recent_distinct(logs: &[EpisodeLog], k: usize) -> Vec<&EpisodeLog> {
    let mut seen: Vec<&[usize]> = vec![];
    let mut out = vec![];
    for l in logs.iter().rev() {
        if out.len() == k {
            break;
        }
        if !seen.contains(&l.indices.as_slice()) {
            seen.push(&l.indices);
            out.push(l);
        }
    }
    out.reverse();
    out
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn finish(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn opt(x: Option<String>) -> String {
    x.unwrap_or_default()
}

pub fn report(run_dir: &Path) -> Result<ReportBundle> {
    let (cfg, space) = load_run(run_dir)?;
    let logs = read_episodes(&run_dir.join(EPISODES_CSV))?;
    let dir = run_dir.join(REPORT_DIR);
    ensure_dir(&dir)?;
    let replay = |l: &EpisodeLog| -> Result<Replay> { replay_scenario(&cfg, space.decode(&l.indices)?) };

    // (a) reward per episode
    let rewards: Vec<f64> = logs.iter().map(|l| l.reward.total).collect();
    let ma = moving_average(&rewards, MA_WINDOW);
    let path = dir.join(REWARD_CSV);
    let mut w = csv_writer(&path)?;
    w.write_record(["episode", "total_reward", "moving_average"])?;
    for (l, m) in logs.iter().zip(&ma) {
        w.write_record([l.episode.to_string(), l.reward.total.to_string(), m.to_string()])?;
    }
    finish(w, &path)?;

    let simulated: Vec<EpisodeLog> = logs.iter().filter(|l| l.outcome.is_some()).cloned().collect();
    let best = best_log(&simulated);
    let median = median_log(&simulated);
    let best_collision = best_log(&simulated.iter().filter(|l| l.is_collision()).cloned().collect::<Vec<_>>()).cloned();
    let median_safe = median_log(simulated.iter().filter(|l| !l.is_collision())).cloned();

    // (b) best vs median distance overlay
    let best_rp = best.map(replay).transpose()?;
    let median_rp = median.map(replay).transpose()?;
    let path = dir.join(OVERLAY_CSV);
    let mut w = csv_writer(&path)?;
    w.write_record(["step", "t", "best_dist", "best_high_risk", "median_dist", "median_high_risk"])?;
    let len = |r: &Option<Replay>| r.as_ref().map_or(0, |r| r.trace.steps.len());
    let n = len(&best_rp).max(len(&median_rp));
    for k in 0..n {
        let col = |r: &Option<Replay>| {
            let r = r.as_ref().filter(|r| k < r.trace.steps.len());
            (
                opt(r.map(|r| r.trace.steps[k].euclid_dist.to_string())),
                opt(r.map(|r| r.profile.flags[k].to_string())),
            )
        };
        let (bd, bh) = col(&best_rp);
        let (md, mh) = col(&median_rp);
        w.write_record([k.to_string(), (k as f64 * cfg.world.dt).to_string(), bd, bh, md, mh])?;
    }
    finish(w, &path)?;

    // (c) second-half high-risk fractions, recomputed from replayed traces
    let mut second_half = vec![];
    let roles = [
        ("best", best.cloned()),
        ("median", median.cloned()),
        ("best_collision", best_collision),
        ("median_non_collision", median_safe),
    ];
    for (role, log) in roles {
        if let Some(l) = log {
            let r = replay(&l)?;
            second_half.push(SecondHalfRow {
                role,
                episode: l.episode,
                outcome: r.trace.outcome.to_string(),
                second_half_fraction: r.profile.second_half_fraction,
            });
        }
    }
    let path = dir.join(SECOND_HALF_CSV);
    let mut w = csv_writer(&path)?;
    w.write_record(["role", "episode", "outcome", "second_half_fraction", "second_half_percent"])?;
    for r in &second_half {
        w.write_record([
            r.role.to_owned(),
            r.episode.to_string(),
            r.outcome.clone(),
            r.second_half_fraction.to_string(),
            (100.0 * r.second_half_fraction).to_string(),
        ])?;
    }
    finish(w, &path)?;

    // (d) K most recent distinct scenarios
    let recent = recent_distinct(&logs, RECENT_K);
    let path = dir.join(RECENT_CSV);
    let mut w = csv_writer(&path)?;
    w.write_record(["rank", "episode", "scenario", "step", "t", "dist", "violation"])?;
    for (rank, l) in recent.iter().enumerate() {
        let label = l.indices.iter().map(ToString::to_string).collect::<Vec<_>>().join("-");
        let violation = (!l.stl_satisfied).to_string();
        if l.outcome.is_none() {
            continue;
        }
        let r = replay(l)?;
        for (k, s) in r.trace.steps.iter().enumerate() {
            w.write_record([
                rank.to_string(),
                l.episode.to_string(),
                label.clone(),
                k.to_string(),
                s.t.to_string(),
                s.euclid_dist.to_string(),
                violation.clone(),
            ])?;
        }
    }
    finish(w, &path)?;

    Ok(ReportBundle {
        dir,
        second_half,
        recent: recent.iter().map(|l| l.episode).collect(),
    })
}
