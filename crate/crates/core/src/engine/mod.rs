//! Run orchestration: configuration, the episode loop, persistence, replay
//! and report export.

pub mod artifacts;
pub mod config;
pub mod replay;
pub mod report;
pub mod runner;
pub mod seeds;

pub use artifacts::{EpisodeLog, RunSummary};
pub use config::{RunConfig, RunSection};
pub use replay::{replay_episode, replay_file, replay_scenario, Replay};
pub use report::{report, ReportBundle};
pub use runner::{run_falsification, run_random_baseline, Method};
