use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scenario-falsify")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const SMALL: &str = r#"
[run]
seed = 3

[sut]
detect_range = 0.0

[train]
total_episodes = 75
hidden_size = 8

[[parameters]]
name = "ego_offset_pos"
dist = "uniform"
params = [1.0, 10.0]
samples = 3

[[parameters]]
name = "ped_accel"
dist = "uniform"
params = [0.0, 0.1]
samples = 2

[[parameters]]
name = "ped_vel"
dist = "normal"
params = [1.46, 0.24]
samples = 3

[[parameters]]
name = "ped_offset_pos"
dist = "uniform"
params = [3.0, 4.5]
samples = 2

[[parameters]]
name = "weather"
dist = "preset"
params = [0, 14]
samples = 2
"#;

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.toml");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn run_replay_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();

    let o = cli(&["run", "--config", &cfg, "--seed", "4", "--out", out_s, "--episodes", "50"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("seed: 4  episodes: 50"), "{text}");
    let episodes = fs::read_to_string(out.join("episodes.csv")).unwrap();
    assert_eq!(episodes.lines().count(), 51);

    let o = cli(&["replay", "--run", out_s, "--episode", "7"]);
    assert_eq!(code(&o), 0);
    let csv = String::from_utf8(o.stdout).unwrap();
    assert!(csv.starts_with("t,ego_x,ego_speed,ped_x,ped_y,dist,detected,braking,rss_d_min,high_risk"));
    assert!(String::from_utf8(o.stderr).unwrap().starts_with("outcome "));

    let o = cli(&["report", "--run", out_s]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("report").join("reward.csv").is_file());

    let base = dir.path().join("base");
    let o = cli(&["baseline", "--config", &cfg, "--out", base.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(base.join("episodes.csv")).unwrap().lines().count(), 76);
}

#[test]
fn replay_scenario_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let sc = dir.path().join("s.json");
    fs::write(&sc, r#"{"indices": [0, 1, 2, 1, 0]}"#).unwrap();
    let csv_out = dir.path().join("trace.csv");
    let o = cli(&[
        "replay",
        "--scenario",
        sc.to_str().unwrap(),
        "--config",
        &cfg,
        "--out",
        csv_out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(&csv_out).unwrap().starts_with("t,ego_x"));

    fs::write(&sc, r#"{"indices": [0, 5, 0, 0, 0]}"#).unwrap();
    let o = cli(&["replay", "--scenario", sc.to_str().unwrap(), "--config", &cfg]);
    assert_eq!(code(&o), 1);
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    assert_eq!(code(&cli(&["run", "--config", missing.to_str().unwrap()])), 1);

    let bad = write_config(dir.path(), "[world]\ndt = -0.1\n");
    let o = cli(&["run", "--config", &bad]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8(o.stderr).unwrap().contains("world.dt"));

    let unknown = write_config(dir.path(), "[train]\nlearning_rate = 1.0\n");
    assert_eq!(code(&cli(&["baseline", "--config", &unknown])), 1);

    assert_eq!(code(&cli(&["replay"])), 1);
    assert_eq!(code(&cli(&["frobnicate"])), 1);
}

#[test]
fn missing_run_artifacts_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["report", "--run", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8(o.stderr).unwrap().contains("config.snapshot"));
    assert_eq!(code(&cli(&["replay", "--run", dir.path().to_str().unwrap(), "--episode", "0"])), 2);
}

#[test]
fn help_exits_0() {
    assert_eq!(code(&cli(&["--help"])), 0);
    assert_eq!(code(&cli(&["run", "--help"])), 0);
}
