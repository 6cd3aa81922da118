use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use scenario_falsify::engine::{self, RunConfig, RunSummary};
use scenario_falsify::{Error, Result};

#[derive(Parser)]
#[command(name = "scenario-falsify", version, about = "Search for scenarios in which the emergency-braking function fails")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Policy-gradient falsification run.
    Run {
        #[command(flatten)]
        common: Common,
        /// Override the number of episodes.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Uniform random search with the same logging.
    Baseline {
        #[command(flatten)]
        common: Common,
    },
    /// Re-simulate a logged episode or a scenario file and print the per-step trace.
    Replay(ReplayArgs),
    /// Export the CSV report bundle of a finished run.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long, requires = "episode", conflicts_with_all = ["scenario", "config"])]
    run: Option<PathBuf>,
    #[arg(long)]
    episode: Option<usize>,
    #[arg(long, requires = "config")]
    scenario: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// An unreadable config file is a configuration error, not a runtime fault.
fn load_config(path: &Path) -> Result<RunConfig> {
    RunConfig::load(path).map_err(|e| match e {
        Error::Io { path, source } => Error::Config {
            field: "--config".into(),
            reason: format!("cannot read {}: {source}", path.display()),
        },
        e => e,
    })
}

fn load(common: &Common) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = load_config(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.run.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from(format!("runs/seed-{}", cfg.run.seed)));
    Ok((cfg, out))
}

fn print_summary(s: &RunSummary, out: &Path) {
    println!("run directory: {}", out.display());
    println!("method: {}  seed: {}  episodes: {}", s.method, s.seed, s.total_episodes);
    println!(
        "best: episode {} reward {:.6} outcome {} indices {:?}",
        s.best.episode, s.best.total_reward, s.best.outcome, s.best.indices
    );
    println!(
        "violating episodes: {} ({} distinct scenarios)",
        s.violating_episodes, s.distinct_violating_scenarios
    );
    if let Some(e) = s.first_violation_episode {
        println!("first violation: episode {e}");
    }
    if let Some(e) = s.convergence_episode {
        println!("moving average settles from episode {e}");
    }
    if let Some(a) = &s.modal_action {
        println!("final modal action: {a:?}");
    }
    if s.faulted_episodes > 0 {
        println!("faulted episodes: {}", s.faulted_episodes);
    }
    println!("wall time: {:.2} s", s.wall_time_secs);
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common, episodes } => {
            let (mut cfg, out) = load(&common)?;
            if let Some(n) = episodes {
                cfg.train.total_episodes = n;
            }
            let s = engine::run_falsification(&cfg, &out)?;
            print_summary(&s, &out);
        }
        Command::Baseline { common } => {
            let (cfg, out) = load(&common)?;
            let s = engine::run_random_baseline(&cfg, &out)?;
            print_summary(&s, &out);
        }
        Command::Replay(a) => {
            let rp = match (&a.run, a.episode, &a.scenario, &a.config) {
                (Some(run), Some(ep), None, None) => engine::replay_episode(run, ep)?,
                (None, None, Some(file), Some(cfg)) => engine::replay_file(file, &load_config(cfg)?)?,
                _ => {
                    return Err(Error::Usage(
                        "replay needs either --run <dir> --episode <n> or --scenario <file> --config <path>".into(),
                    ))
                }
            };
            match &a.out {
                Some(path) => {
                    let f = File::create(path).map_err(|e| Error::io(path, e))?;
                    rp.write_extended_csv(BufWriter::new(f))?;
                }
                None => rp.write_extended_csv(io::stdout().lock())?,
            }
            eprintln!(
                "outcome {} final_dist {} reward {} stl_satisfied {}",
                rp.trace.outcome, rp.trace.final_dist, rp.reward.total, rp.stl_satisfied
            );
        }
        Command::Report { run } => {
            let b = engine::report(&run)?;
            println!("report written to {}", b.dir.display());
            for r in &b.second_half {
                println!(
                    "{:<22} episode {:>6}  {:<22} second-half high-risk {:.1}%",
                    r.role,
                    r.episode,
                    r.outcome,
                    100.0 * r.second_half_fraction
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => {
            let _ = io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
