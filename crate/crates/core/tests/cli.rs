use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nn_economy::config::RunConfig;
use nn_economy::population::PanelDataset;
use nn_economy::rational::{find_equilibrium, AssetGrid};

const SMALL: &str = "grid_points = 120\nn_agents = 10\n";

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nn-economy"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn small_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("run.cfg");
    fs::write(&path, format!("{SMALL}{extra}")).unwrap();
    path.display().to_string()
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = scratch("config_errors");
    let out = run(&dir, &["solve-re", "--config", "/nonexistent/run.cfg"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/run.cfg"));

    let bad = small_config(&dir, "discount = 0.9\n");
    let out = run(&dir, &["solve-re", "--config", &bad]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("discount"));

    let cfg = small_config(&dir, "");
    let out = run(&dir, &["simulate", "--config", &cfg, "--generation", "2"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&dir, &["simulate", "--config", &cfg, "--threads", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solve_re_is_reproducible() {
    let dir = scratch("solve_re");
    let first = run(&dir, &["solve-re"]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let summary = fs::read_to_string(dir.join("re_summary.json")).unwrap();
    let policy = fs::read(dir.join("re_policy.csv")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&summary).unwrap();
    let r = v["r"].as_f64().unwrap();
    assert!((r - 0.0329).abs() <= 0.0015, "r = {r}");
    assert!(dir.join("re_wealth.csv").exists() && dir.join("manifest_solve-re.json").exists());

    assert!(run(&dir, &["solve-re"]).status.success());
    assert_eq!(fs::read_to_string(dir.join("re_summary.json")).unwrap(), summary);
    assert_eq!(fs::read(dir.join("re_policy.csv")).unwrap(), policy);
}

#[test]
fn simulate_writes_panel_and_manifest() {
    let dir = scratch("simulate");
    let cfg = small_config(&dir, "");
    let out = run(&dir, &["simulate", "--config", &cfg, "--seed", "5", "--threads", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let panel = fs::read_to_string(dir.join("panel_gen1_low.csv")).unwrap();
    assert_eq!(panel.lines().count(), 1 + 1000);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest_simulate_gen1_low.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"].as_u64(), Some(5));
    let expected = RunConfig::parse_str(&format!("{SMALL}seed = 5\n")).unwrap();
    assert_eq!(manifest["config_hash"].as_str(), Some(expected.hash().as_str()));
    for f in ["snapshots_gen1_low.csv", "networks_gen1_low.jsonl", "diversion_gen1_low.csv"] {
        assert!(dir.join(f).exists(), "{f}");
    }

    let out = run(&dir, &["simulate", "--config", &cfg, "--seed", "5", "--generation", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let child = fs::read_to_string(dir.join("panel_gen2_low.csv")).unwrap();
    assert_eq!(child.lines().count(), 1 + 1000);

    let again = scratch("simulate_again");
    assert!(run(&again, &["simulate", "--config", &cfg, "--seed", "5", "--threads", "1"]).status.success());
    assert_eq!(fs::read_to_string(again.join("panel_gen1_low.csv")).unwrap(), panel);
}

#[test]
fn stats_reports_every_panel() {
    let dir = scratch("stats");
    let cfg_path = small_config(&dir, "");
    let cfg = RunConfig::parse_str(SMALL).unwrap();
    let prefs = cfg.preferences().unwrap();
    let chain = cfg.chain().unwrap();
    let grid: AssetGrid = cfg.grid().unwrap();
    let eq = find_equilibrium(cfg.technology().unwrap(), prefs, &chain, &grid).unwrap();
    let re = PanelDataset::rational(300, 100, 20, &eq.policy, &eq.distribution, 1).unwrap();
    let re_path = dir.join("panel_re.csv");
    fs::write(&re_path, re.to_csv_string()).unwrap();

    let out = run(&dir, &["stats", "--config", &cfg_path, re_path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(dir.join("report.csv")).unwrap();
    assert_eq!(report.lines().next().unwrap(), "statistic,re");
    assert!(report.lines().any(|l| l.starts_with("gini,")));

    assert!(run(&dir, &["simulate", "--config", &cfg_path]).status.success());
    let out = run(&dir, &["stats", "--config", &cfg_path]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.join("report.txt")).unwrap();
    let csv = fs::read_to_string(dir.join("report.csv")).unwrap();
    assert!(csv.lines().next().unwrap().contains("gen1_low"));
    assert!(dir.join("figures").is_dir());
    assert!(run(&dir, &["stats", "--config", &cfg_path]).status.success());
    assert_eq!(fs::read_to_string(dir.join("report.txt")).unwrap(), text);
    assert_eq!(fs::read_to_string(dir.join("report.csv")).unwrap(), csv);

    let broken = dir.join("broken.csv");
    fs::write(&broken, "agent_id,age\n0,0\n").unwrap();
    let out = run(&dir, &["stats", "--config", &cfg_path, broken.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("generation"));
}

#[test]
fn asymptotic_without_learning_keeps_its_gap() {
    let dir = scratch("asymptotic");
    let cfg = small_config(&dir, "learn_freq = 0\n");
    let out = run(&dir, &["asymptotic", "--config", &cfg, "--agents", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let gaps = fs::read_to_string(dir.join("asymptotic_gaps.csv")).unwrap();
    for agent in ["0", "1"] {
        let series: Vec<&str> = gaps
            .lines()
            .skip(1)
            .filter(|l| l.split(',').next() == Some(agent))
            .map(|l| l.rsplit(',').next().unwrap())
            .collect();
        assert!(series.len() >= 80);
        assert!(series.iter().all(|g| *g == series[0]), "agent {agent} gap moved");
    }
    let summary = fs::read_to_string(dir.join("asymptotic_summary.json")).unwrap();
    assert!(run(&dir, &["asymptotic", "--config", &cfg, "--agents", "2"]).status.success());
    assert_eq!(fs::read_to_string(dir.join("asymptotic_summary.json")).unwrap(), summary);
    assert_eq!(fs::read_to_string(dir.join("asymptotic_gaps.csv")).unwrap(), gaps);
}
