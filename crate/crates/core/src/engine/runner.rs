//! Episode loop shared by policy search and the random baseline.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::controller::{sample_action, Episode, Policy, PolicyShape, Reinforce};
use crate::error::{Error, Result};
use crate::metrics::{classify_timesteps, stl_satisfied};
use crate::param_space::ParameterSpace;
use crate::reward::{total_reward, RewardBreakdown};
use crate::sim::{run_episode, Trace};

use super::artifacts::{
    ensure_dir, write_bins, write_json, BestScenario, EpisodeLog, EpisodeWriter, RunSummary, BEST_TRACE,
    BINS_CSV, CHECKPOINT_DIR, CONFIG_SNAPSHOT, EPISODES_CSV, SUMMARY_JSON, TRACE_DIR,
};
use super::config::RunConfig;
use super::seeds::{derive_seed, stream_rng, Stream};

pub const MA_WINDOW: usize = 100;
const EARLY_STOP_SPAN: usize = 500;
const EARLY_STOP_TOL: f64 = 1e-4;
/// Band around the final moving average used to locate convergence.
pub const CONVERGENCE_BAND: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Reinforce,
    Random,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Reinforce => "reinforce",
            Method::Random => "random",
        }
    }
}

/// The frozen parameter space of a run.
pub fn build_space(cfg: &RunConfig) -> Result<ParameterSpace<f64>> {
    let space = ParameterSpace::generate(cfg.parameters.clone(), derive_seed(cfg.run.seed, Stream::Bins))?;
    cfg.validate_space(&space)?;
    Ok(space)
}

/// Simulates, classifies and scores one scenario. A simulation fault yields
/// a `Fault` record with zero reward and no trace.
pub fn evaluate(
    cfg: &RunConfig,
    space: &ParameterSpace<f64>,
    episode: usize,
    indices: &[usize],
) -> Result<(EpisodeLog, Option<Trace<f64>>)> {
    let scenario = space.decode(indices)?;
    let scored = run_episode(&scenario, &cfg.world, &cfg.sut, &cfg.requirement).and_then(|trace| {
        let profile = classify_timesteps(&trace, &cfg.rss)?;
        let reward = total_reward(&trace, &profile, &cfg.reward)?;
        Ok((trace, profile, reward))
    });
    Ok(match scored {
        Ok((trace, profile, reward)) => (
            EpisodeLog {
                episode,
                indices: scenario.indices.clone(),
                values: scenario.values.clone(),
                outcome: Some(trace.outcome),
                final_dist: trace.final_dist,
                high_risk_count: profile.high_risk_count,
                total_steps: profile.total_steps,
                second_half_fraction: profile.second_half_fraction,
                reward,
                stl_satisfied: stl_satisfied(&trace, &cfg.requirement),
            },
            Some(trace),
        ),
        Err(Error::Simulation { .. } | Error::Domain { .. }) => (
            EpisodeLog {
                episode,
                indices: scenario.indices,
                values: scenario.values,
                outcome: None,
                final_dist: f64::NAN,
                high_risk_count: 0,
                total_steps: 0,
                second_half_fraction: 0.0,
                reward: RewardBreakdown::zero(),
                stl_satisfied: true,
            },
            None,
        ),
        Err(e) => return Err(e),
    })
}

/// Trailing mean over `min(e + 1, window)` points at every episode `e`.
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for (e, &x) in xs.iter().enumerate() {
        sum += x;
        if e >= window {
            sum -= xs[e - window];
        }
        out.push(sum / (e + 1).min(window) as f64);
    }
    out
}

/// First episode after which the moving average stays within
/// [`CONVERGENCE_BAND`] of its final value.
pub fn convergence_episode(ma: &[f64]) -> Option<usize> {
    let last = *ma.last()?;
    let outside = ma.iter().rposition(|&m| (m - last).abs() >= CONVERGENCE_BAND);
    Some(outside.map_or(0, |i| i + 1))
}

fn plateaued(ma: &[f64]) -> bool {
    let n = ma.len();
    n > EARLY_STOP_SPAN && (ma[n - 1] - ma[n - 1 - EARLY_STOP_SPAN]).abs() < EARLY_STOP_TOL
}

/// Reward-maximizing log, earliest episode on ties.
pub fn best_log(logs: &[EpisodeLog]) -> Option<&EpisodeLog> {
    logs.iter()
        .fold(None, |best: Option<&EpisodeLog>, l| match best {
            Some(b) if b.reward.total >= l.reward.total => Some(b),
            _ => Some(l),
        })
}

fn write_trace(path: &Path, trace: &Trace<f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    trace.write_csv(BufWriter::new(file))
}

/// Proposed index vector, with its policy sample when searching.
type Proposal = (Vec<usize>, Option<Episode<f64>>);

struct Proposer {
    method: Method,
    policy: Option<Policy<f64>>,
    trainer: Option<Reinforce<f64>>,
    rng: rand_chacha::ChaCha8Rng,
    state: Vec<usize>,
}

impl Proposer {
    fn new(method: Method, cfg: &RunConfig, space: &ParameterSpace<f64>) -> Result<Self> {
        let seed = cfg.run.seed;
        let (policy, trainer, rng) = match method {
            Method::Reinforce => {
                let shape = PolicyShape {
                    head_sizes: space.bin_counts(),
                    hidden: cfg.train.hidden_size,
                    layers: cfg.train.layers,
                };
                let policy = Policy::new(shape, &mut stream_rng(seed, Stream::PolicyInit))?;
                (
                    Some(policy),
                    Some(Reinforce::from_config(&cfg.train)),
                    stream_rng(seed, Stream::PolicySampling),
                )
            }
            Method::Random => (None, None, stream_rng(seed, Stream::BaselineSampling)),
        };
        Ok(Self {
            method,
            policy,
            trainer,
            rng,
            state: vec![0; space.len()],
        })
    }

    /// Draws a batch serially; each action becomes the next state.
    fn propose(&mut self, space: &ParameterSpace<f64>, n: usize) -> Result<Vec<Proposal>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            match &self.policy {
                Some(policy) => {
                    let dists = policy.forward(&self.state)?;
                    let sample = sample_action(&dists, &mut self.rng);
                    let indices = sample.indices.clone();
                    let ep = Episode {
                        state: std::mem::replace(&mut self.state, indices.clone()),
                        sample,
                        ret: 0.0,
                    };
                    out.push((indices, Some(ep)));
                }
                None => {
                    let indices = space.random_scenario(&mut self.rng).indices;
                    self.state = indices.clone();
                    out.push((indices, None));
                }
            }
        }
        Ok(out)
    }
}

/// Policy-gradient falsification run; writes the full run directory under `out`.
pub fn run_falsification(cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    run(cfg, out, Method::Reinforce)
}

/// Uniform random search with the same schema and batching.
pub fn run_random_baseline(cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    run(cfg, out, Method::Random)
}

pub fn run(cfg: &RunConfig, out: &Path, method: Method) -> Result<RunSummary> {
    let started = Instant::now();
    cfg.validate()?;
    let space = build_space(cfg)?;
    let fingerprint = space.fingerprint();

    ensure_dir(out)?;
    let ck_dir = out.join(CHECKPOINT_DIR);
    let trace_dir = out.join(TRACE_DIR);
    ensure_dir(&trace_dir)?;
    if method == Method::Reinforce {
        ensure_dir(&ck_dir)?;
    }
    let snapshot = out.join(CONFIG_SNAPSHOT);
    fs::write(&snapshot, cfg.to_toml_string()).map_err(|e| Error::io(&snapshot, e))?;
    write_bins(&out.join(BINS_CSV), &space)?;

    let mut writer = EpisodeWriter::create(&out.join(EPISODES_CSV), space.len())?;
    let mut proposer = Proposer::new(method, cfg, &space)?;
    let total = cfg.train.total_episodes;
    let mut logs: Vec<EpisodeLog> = Vec::with_capacity(total);
    let mut rewards = Vec::with_capacity(total);
    let mut best: Option<(f64, Trace<f64>)> = None;
    let mut updates = 0usize;
    let mut early_stopped = false;

    while logs.len() < total {
        let n = cfg.train.batch_size.min(total - logs.len());
        let base = logs.len();
        let proposals = proposer.propose(&space, n)?;
        let results: Vec<(EpisodeLog, Option<Trace<f64>>)> = proposals
            .par_iter()
            .enumerate()
            .map(|(i, (idx, _))| evaluate(cfg, &space, base + i, idx))
            .collect::<Result<_>>()?;

        let mut batch = Vec::with_capacity(n);
        for ((log, trace), (_, ep)) in results.into_iter().zip(proposals) {
            writer.write(&log)?;
            if let Some(trace) = trace {
                if cfg.run.save_traces {
                    write_trace(&trace_dir.join(format!("episode_{:06}.csv", log.episode)), &trace)?;
                }
                if best.as_ref().is_none_or(|(r, _)| log.reward.total > *r) {
                    best = Some((log.reward.total, trace));
                }
            }
            if let Some(mut ep) = ep {
                ep.ret = log.reward.total;
                batch.push(ep);
            }
            rewards.push(log.reward.total);
            logs.push(log);
        }
        writer.flush()?;

        if let (Some(policy), Some(trainer)) = (proposer.policy.as_mut(), proposer.trainer.as_mut()) {
            trainer.update(policy, &batch)?;
            updates += 1;
            let every = cfg.train.checkpoint_every;
            if every > 0 && updates.is_multiple_of(every) {
                let path = ck_dir.join(format!("update_{updates:05}.json"));
                write_json(&path, &policy.to_checkpoint(fingerprint))?;
            }
        }

        if cfg.train.early_stop && plateaued(&moving_average(&rewards, MA_WINDOW)) {
            early_stopped = logs.len() < total;
            break;
        }
    }

    let modal_action = match &proposer.policy {
        Some(policy) => {
            write_json(&ck_dir.join("final.json"), &policy.to_checkpoint(fingerprint))?;
            Some(policy.modal_action(&proposer.state)?)
        }
        None => None,
    };
    if let Some((_, trace)) = &best {
        write_trace(&trace_dir.join(BEST_TRACE), trace)?;
    }

    let ma = moving_average(&rewards, MA_WINDOW);
    let best_log = best_log(&logs).expect("at least one episode");
    let violating: Vec<&EpisodeLog> = logs.iter().filter(|l| !l.stl_satisfied).collect();
    let mut distinct: Vec<&[usize]> = violating.iter().map(|l| l.indices.as_slice()).collect();
    distinct.sort_unstable();
    distinct.dedup();

    let summary = RunSummary {
        method: proposer.method.label().to_owned(),
        seed: cfg.run.seed,
        total_episodes: logs.len(),
        best: BestScenario {
            episode: best_log.episode,
            indices: best_log.indices.clone(),
            values: best_log.values.clone(),
            outcome: best_log.outcome_label(),
            total_reward: best_log.reward.total,
        },
        violating_episodes: violating.len(),
        first_violation_episode: violating.first().map(|l| l.episode),
        distinct_violating_scenarios: distinct.len(),
        convergence_episode: convergence_episode(&ma),
        reward_moving_average: ma,
        modal_action,
        faulted_episodes: logs.iter().filter(|l| l.outcome.is_none()).count(),
        early_stopped,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    write_json(&out.join(SUMMARY_JSON), &summary)?;
    Ok(summary)
}
