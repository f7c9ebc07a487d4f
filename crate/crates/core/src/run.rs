//! Subcommand drivers: solve the rational benchmark, simulate populations,
//! summarize panels and run the long-horizon learners.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;

use crate::agent::{Environment, Hyperparameters};
use crate::asymptotic::{run_asymptotic, AsymptoticConfig, AsymptoticRun};
use crate::config::RunConfig;
use crate::economy::{Preferences, Prices};
use crate::error::{Error, Result};
use crate::export::fmt_f64;
use crate::markov::MarkovChain;
use crate::population::{
    diversion_by_age, read_snapshots_csv, simulate_population, simulate_second_generation, snapshot_table,
    snapshots_jsonl, write_snapshots_csv, EvaluationGrid, Generation, PanelDataset, SimulationConfig, SnapshotRow,
};
use crate::rational::{find_equilibrium, policy_table_csv, AssetGrid, Equilibrium};
use crate::stats::{self, MobilityAges, StatReport, View};

/// Runs `f` on a pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config(format!("cannot start {n} worker threads: {e}")))?
            .install(f),
    }
}

/// Calibration plus its solved rational equilibrium.
pub struct Model {
    pub prefs: Preferences,
    pub chain: MarkovChain,
    pub grid: AssetGrid,
    pub eq: Equilibrium,
}

impl Model {
    pub fn solve(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let prefs = cfg.preferences()?;
        let chain = cfg.chain()?;
        let grid = cfg.grid()?;
        let eq = find_equilibrium(cfg.technology()?, prefs, &chain, &grid)?;
        info!("equilibrium r = {:.6}, w = {:.6}", eq.prices.r, eq.prices.w);
        Ok(Model { prefs, chain, grid, eq })
    }

    pub fn environment(&self, hp: &Hyperparameters) -> Result<Environment> {
        Environment::new(self.chain.clone(), self.eq.prices, self.prefs, hp)
    }

    pub fn prices(&self) -> Prices {
        self.eq.prices
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    Ok(cfg.out.clone())
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub preset: String,
    pub generation: u8,
    pub n_agents: usize,
    pub config: String,
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            preset: cfg.preset.name().to_string(),
            generation: cfg.generation.number(),
            n_agents: cfg.n_agents,
            config: cfg.to_text(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReSummary {
    pub r: f64,
    pub w: f64,
    pub capital: f64,
    pub capital_supply: f64,
    pub labor: f64,
    pub bisection_steps: usize,
    pub top_binding_nodes: usize,
}

/// Writes `re_summary.json`, `re_policy.csv` (policy, value and stationary
/// mass on the grid), `re_wealth.csv` (wealth marginal) and a manifest.
pub fn cmd_solve_re(cfg: &RunConfig) -> Result<ReSummary> {
    let model = Model::solve(cfg)?;
    let dir = out_dir(cfg)?;
    let eq = &model.eq;
    let summary = ReSummary {
        r: eq.prices.r,
        w: eq.prices.w,
        capital: eq.capital_demand,
        capital_supply: eq.capital_supply,
        labor: eq.labor,
        bisection_steps: eq.bisection_steps,
        top_binding_nodes: eq.policy.top_binding_nodes(),
    };
    write(&dir.join("re_summary.json"), json(&summary))?;
    write(&dir.join("re_policy.csv"), policy_table_csv(&eq.policy, Some(&eq.distribution)))?;
    let mut marginal = String::from("a,mass\n");
    for (a, m) in model.grid.points().iter().zip(eq.distribution.asset_marginal()) {
        marginal.push_str(&format!("{},{}\n", fmt_f64(*a), fmt_f64(m)));
    }
    write(&dir.join("re_wealth.csv"), marginal)?;
    write(&dir.join("manifest_solve-re.json"), json(&Manifest::new("solve-re", cfg)))?;
    Ok(summary)
}

/// File stem shared by the outputs of one simulation.
pub fn run_tag(cfg: &RunConfig) -> String {
    format!("gen{}_{}", cfg.generation.number(), cfg.preset.name())
}

#[derive(Debug, Clone)]
pub struct SimulateOutput {
    pub panel_path: PathBuf,
    pub panel: PanelDataset,
}

/// Writes `panel_<tag>.csv`, `snapshots_<tag>.csv`, `networks_<tag>.jsonl`,
/// `diversion_<tag>.csv` and a manifest.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulateOutput> {
    cfg.validate()?;
    let parent = match cfg.generation {
        Generation::First => None,
        Generation::Second => {
            let path = cfg
                .parent_panel
                .clone()
                .unwrap_or_else(|| cfg.out.join(format!("panel_gen1_{}.csv", cfg.preset.name())));
            if !path.exists() {
                return Err(Error::config(format!(
                    "second-generation run needs a parent panel; {} does not exist",
                    path.display()
                )));
            }
            Some(read_panel(&path, cfg.hyperparameters().childhood)?)
        }
    };
    let model = Model::solve(cfg)?;
    let hp = cfg.hyperparameters();
    let env = model.environment(&hp)?;
    let mut sim = SimulationConfig::new(cfg.n_agents, hp.clone(), cfg.seed);
    sim.generation = cfg.generation;
    info!("simulating {} agents ({})", cfg.n_agents, run_tag(cfg));
    let pop = match &parent {
        None => simulate_population(&sim, &env, &model.eq.policy, &model.eq.distribution)?,
        Some(p) => simulate_second_generation(p, &sim, &env, &model.eq.policy)?,
    };
    let panel = PanelDataset::from_population(&pop, hp.childhood);
    let grid = EvaluationGrid::standard(&model.eq.policy, &model.eq.distribution)?;
    let snaps = snapshot_table(&pop, &env, &grid)?;

    let dir = out_dir(cfg)?;
    let tag = run_tag(cfg);
    let panel_path = dir.join(format!("panel_{tag}.csv"));
    write(&panel_path, panel.to_csv_string())?;
    let mut buf = Vec::new();
    write_snapshots_csv(&snaps, &mut buf)?;
    write(&dir.join(format!("snapshots_{tag}.csv")), buf)?;
    write(&dir.join(format!("networks_{tag}.jsonl")), snapshots_jsonl(&pop))?;
    write(&dir.join(format!("diversion_{tag}.csv")), diversion_csv(&panel))?;
    write(&dir.join(format!("manifest_simulate_{tag}.json")), json(&Manifest::new("simulate", cfg)))?;
    Ok(SimulateOutput { panel_path, panel })
}

fn diversion_csv(panel: &PanelDataset) -> String {
    let mut s = String::from("age,mean,sd\n");
    for (t, m, sd) in diversion_by_age(panel) {
        s.push_str(&format!("{t},{},{}\n", fmt_f64(m), fmt_f64(sd)));
    }
    s
}

pub fn read_panel(path: &Path, childhood: usize) -> Result<PanelDataset> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    PanelDataset::read_csv(std::io::BufReader::new(file), &path.display().to_string(), childhood)
}

fn read_snapshots(path: &Path) -> Result<Vec<SnapshotRow>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_snapshots_csv(std::io::BufReader::new(file), &path.display().to_string())
}

/// Panel files in `dir`, sorted by name.
pub fn discover_panels(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("panel_") && n.ends_with(".csv"))
        })
        .collect();
    out.sort();
    Ok(out)
}

fn column_name(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("panel");
    stem.strip_prefix("panel_").unwrap_or(stem).to_string()
}

fn or_nan(what: &str, column: &str, r: Result<f64>) -> f64 {
    r.unwrap_or_else(|e| {
        warn!("{what} ({column}): {e}");
        f64::NAN
    })
}

pub const REPORT_ROWS: [&str; 15] = [
    "cv",
    "ev",
    "h2m_frequency",
    "h2m_persistence_2",
    "h2m_persistence_4",
    "gini",
    "top1_share",
    "top5_share",
    "top20_share",
    "average_mpc",
    "consumption_elasticity",
    "income_rank_rank",
    "income_ige",
    "wealth_shorrocks",
    "wealth_ige",
];

/// Panel statistics in `REPORT_ROWS` order. Distributional moments of the
/// rational column come from the stationary distribution, not the panel.
fn panel_column(panel: &PanelDataset, view: View, model: &Model, rho: f64, name: &str) -> Vec<f64> {
    let p = model.prices();
    let f = |what: &str, r: Result<f64>| or_nan(what, name, r);
    let (cv, ev) = match view {
        View::Learned => stats::discounted_utilities(panel, model.prefs, panel.childhood)
            .and_then(|(u_nn, u_re)| stats::welfare_variation(u_nn, u_re, model.prefs.gamma))
            .unwrap_or_else(|e| {
                warn!("welfare ({name}): {e}");
                (f64::NAN, f64::NAN)
            }),
        View::Rational => (f64::NAN, f64::NAN),
    };
    let (gini, tops, mpc) = match view {
        View::Learned => {
            let w = stats::adult_wealth(panel, view);
            let tops = stats::top_shares(&w, &[0.01, 0.05, 0.2]).unwrap_or_else(|e| {
                warn!("top shares ({name}): {e}");
                vec![f64::NAN; 3]
            });
            (f("gini", stats::gini(&w)), tops, f("mpc", stats::average_mpc(panel, view)))
        }
        View::Rational => {
            let (values, weights) = stationary_points(model);
            let tops = stats::top_shares_weighted(&values, &weights, &[0.01, 0.05, 0.2]).unwrap_or_else(|e| {
                warn!("top shares ({name}): {e}");
                vec![f64::NAN; 3]
            });
            let mpc = stats::rational_average_mpc(&model.eq.policy, &model.eq.distribution, crate::agent::MPC_STEP);
            (f("gini", stats::gini_weighted(&values, &weights)), tops, mpc)
        }
    };
    let mobility = stats::mobility_pairs(panel, view, p, MobilityAges::default());
    let mob = |g: &dyn Fn(&stats::MobilityPairs) -> Result<f64>, what: &str| match &mobility {
        Ok(m) => f(what, g(m)),
        Err(e) => {
            warn!("{what} ({name}): {e}");
            f64::NAN
        }
    };
    vec![
        cv,
        ev,
        f("h2m frequency", stats::h2m_frequency(panel, view, p)),
        f("h2m persistence", stats::h2m_persistence(panel, view, p, 2)),
        f("h2m persistence", stats::h2m_persistence(panel, view, p, 4)),
        gini,
        tops[0],
        tops[1],
        tops[2],
        mpc,
        f("elasticity", stats::sensitivity_elasticity(panel, view, p, rho)),
        mob(&|m| stats::rank_rank_slope(&m.parent_income, &m.child_income), "income rank-rank"),
        mob(&|m| stats::intergenerational_elasticity(&m.parent_income, &m.child_income, true), "income ige"),
        mob(&|m| stats::shorrocks_index(&m.parent_wealth, &m.child_wealth, 5), "wealth shorrocks"),
        mob(&|m| stats::intergenerational_elasticity(&m.parent_wealth, &m.child_wealth, true), "wealth ige"),
    ]
}

fn stationary_points(model: &Model) -> (Vec<f64>, Vec<f64>) {
    let dist = &model.eq.distribution;
    let pts = model.grid.points();
    let mut values = Vec::with_capacity(pts.len() * dist.n_states());
    let mut weights = Vec::with_capacity(values.capacity());
    for iz in 0..dist.n_states() {
        for (ia, &a) in pts.iter().enumerate() {
            values.push(a);
            weights.push(dist.at(ia, iz));
        }
    }
    (values, weights)
}

/// Summarizes `panels` (or every `panel_*.csv` in the output directory) into
/// `report.txt`, `report.csv` and figure-data files under `figures/`.
/// A panel of purely rational agents supplies the rational column; otherwise
/// one is simulated with the configured seed and agent count.
pub fn cmd_stats(cfg: &RunConfig, panels: &[PathBuf]) -> Result<StatReport> {
    cfg.validate()?;
    let paths = if panels.is_empty() { discover_panels(&cfg.out)? } else { panels.to_vec() };
    let hp = cfg.hyperparameters();
    let mut learned = Vec::new();
    let mut rational = None;
    for path in &paths {
        let panel = read_panel(path, hp.childhood)?;
        if panel.rows.first().is_some_and(|r| r.generation == 0) {
            rational.get_or_insert((column_name(path), panel));
        } else {
            learned.push((path.clone(), column_name(path), panel));
        }
    }
    let model = Model::solve(cfg)?;
    let re_panel = match rational {
        Some((_, p)) => p,
        None => PanelDataset::rational(
            cfg.n_agents,
            hp.life_t,
            hp.childhood,
            &model.eq.policy,
            &model.eq.distribution,
            cfg.seed,
        )?,
    };

    let mut columns: Vec<String> = learned.iter().map(|l| l.1.clone()).collect();
    columns.push("re".into());
    let mut report = StatReport::new(columns);
    report.meta("version", env!("CARGO_PKG_VERSION"));
    report.meta("config_hash", cfg.hash());
    report.meta("seed", cfg.seed);
    report.meta("r", format!("{:.6}", model.prices().r));
    for (path, name, _) in &learned {
        report.meta(&format!("panel.{name}"), path.display());
    }
    let mut values: Vec<Vec<f64>> = learned
        .iter()
        .map(|(_, name, p)| panel_column(p, View::Learned, &model, cfg.rho, name))
        .collect();
    values.push(panel_column(&re_panel, View::Rational, &model, cfg.rho, "re"));
    for (i, row) in REPORT_ROWS.iter().enumerate() {
        report.push(row, values.iter().map(|c| c[i]).collect());
    }

    let dir = out_dir(cfg)?;
    write(&dir.join("report.txt"), report.to_text())?;
    write(&dir.join("report.csv"), report.to_csv())?;
    let fig = dir.join("figures");
    fs::create_dir_all(&fig).map_err(|e| Error::io(&fig, e))?;
    let extreme = {
        let (v, w) = stationary_points(&model);
        stats::weighted_quantile(&v, &w, 0.99)
    };
    for (path, name, panel) in &learned {
        figure_files(&fig, name, panel, View::Learned, &model, cfg.rho, extreme)?;
        write(&fig.join(format!("diversion_{name}.csv")), diversion_csv(panel))?;
        let snap_path = path.with_file_name(format!("snapshots_{name}.csv"));
        if snap_path.exists() {
            snapshot_figures(&fig, name, panel, &read_snapshots(&snap_path)?, &model)?;
        } else {
            warn!("no snapshots for {name}; policy figures skipped");
        }
    }
    figure_files(&fig, "re", &re_panel, View::Rational, &model, cfg.rho, extreme)?;
    Ok(report)
}

fn decile_csv(rows: &[(usize, f64, f64, f64)]) -> String {
    let mut s = String::from("decile,lower,upper,value\n");
    for (d, lo, hi, v) in rows {
        s.push_str(&format!("{d},{},{},{}\n", fmt_f64(*lo), fmt_f64(*hi), fmt_f64(*v)));
    }
    s
}

const FIGURE_BINS: usize = 20;

fn figure_files(dir: &Path, name: &str, panel: &PanelDataset, view: View, model: &Model, rho: f64, extreme: f64) -> Result<()> {
    let p = model.prices();
    write(&dir.join(format!("mpc_by_wealth_{name}.csv")), decile_csv(&stats::mpc_by_wealth(panel, view)))?;
    write(
        &dir.join(format!("elasticity_by_wealth_{name}.csv")),
        decile_csv(&stats::elasticity_by_wealth(panel, view, p, rho)),
    )?;
    let parent_age = panel.childhood.min(panel.life_t.saturating_sub(1));
    if panel.n_agents() >= 2 && panel.life_t > 0 {
        let last = panel.life_t - 1;
        let parent: Vec<f64> = panel.agents().map(|r| view.wealth(&r[parent_age])).collect();
        let child: Vec<f64> = panel.agents().map(|r| view.wealth(&r[last])).collect();
        let mut s = String::from("bin,parent_rank_mid,child_rank_mean\n");
        for (b, m) in stats::binned_rank_means(&parent, &child, FIGURE_BINS) {
            let mid = (b as f64 + 0.5) / FIGURE_BINS as f64;
            s.push_str(&format!("{b},{},{}\n", fmt_f64(mid), fmt_f64(m)));
        }
        write(&dir.join(format!("rank_rank_{name}.csv")), s)?;
        let mut s = String::from("bin,parent_rank_mid,p_extreme,p_h2m\n");
        for (b, x, h) in stats::extreme_outcomes_by_parent_rank(panel, view, p, parent_age, extreme, FIGURE_BINS) {
            let mid = (b as f64 + 0.5) / FIGURE_BINS as f64;
            s.push_str(&format!("{b},{},{},{}\n", fmt_f64(mid), fmt_f64(x), fmt_f64(h)));
        }
        write(&dir.join(format!("extreme_{name}.csv")), s)?;
    }
    Ok(())
}

fn snapshot_figures(dir: &Path, name: &str, panel: &PanelDataset, snaps: &[SnapshotRow], model: &Model) -> Result<()> {
    let re = &model.eq.policy;
    let mut ages: Vec<usize> = snaps.iter().map(|s| s.age).collect();
    ages.sort_unstable();
    ages.dedup();
    let mut s = String::from("age,sweep,a,z,learned_saving_rate,re_saving_rate\n");
    for &age in &ages {
        for (sweep, a, z, l, r) in stats::policy_profile(snaps, age, re) {
            s.push_str(&format!("{age},{sweep},{},{},{},{}\n", fmt_f64(a), fmt_f64(z), fmt_f64(l), fmt_f64(r)));
        }
    }
    write(&dir.join(format!("policy_profile_{name}.csv")), s)?;

    let mut s = String::from("age,z,q10,q25,q50,q75,q90\n");
    for &age in &ages {
        for (z, q) in stats::policy_distribution_by_z(snaps, age) {
            s.push_str(&format!("{age},{}", fmt_f64(z)));
            for v in q {
                s.push_str(&format!(",{}", fmt_f64(v)));
            }
            s.push('\n');
        }
    }
    write(&dir.join(format!("policy_by_z_{name}.csv")), s)?;

    let age = panel.childhood;
    if ages.contains(&age) && panel.life_t > age {
        let inherited: Vec<f64> = panel.agents().map(|r| r[age].a).collect();
        let groups = stats::quantile_groups(&inherited, 4);
        let ids: Vec<u64> = panel.agents().map(|r| r[0].agent_id).collect();
        let lookup: std::collections::HashMap<u64, usize> = ids.into_iter().zip(groups).collect();
        let dev = stats::policy_sq_deviation(snaps, age, re, |id| lookup.get(&id).copied(), 4)?;
        let mut s = String::from("quartile,sweep,x,mean_sq_deviation\n");
        for (g, sweep, x, v) in dev {
            s.push_str(&format!("{g},{sweep},{},{}\n", fmt_f64(x), fmt_f64(v)));
        }
        write(&dir.join(format!("sq_deviation_{name}.csv")), s)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticSummary {
    pub median_z_index: usize,
    pub final_gaps: Vec<f64>,
    pub max_abs_euler_residuals: Vec<f64>,
}

/// Writes `asymptotic_gaps.csv` (gap by agent and age),
/// `asymptotic_euler.csv`, `asymptotic_summary.json` and a manifest.
pub fn cmd_asymptotic(cfg: &RunConfig) -> Result<Vec<AsymptoticRun>> {
    let model = Model::solve(cfg)?;
    let mut acfg = AsymptoticConfig::new(cfg.asymptotic_agents, cfg.seed);
    acfg.hp = cfg.asymptotic_hyperparameters();
    let env = model.environment(&acfg.hp)?;
    info!("asymptotic run: {} agents, {} steps per period", acfg.n_agents, acfg.hp.learn_freq);
    let runs = run_asymptotic(&acfg, &env, &model.eq.policy, &model.eq.distribution)?;

    let dir = out_dir(cfg)?;
    let mut gaps = String::from("agent_id,age,max_gap\n");
    let mut euler = String::from("agent_id,a,z_index,residual\n");
    for run in &runs {
        for (age, g) in &run.gaps {
            gaps.push_str(&format!("{},{age},{}\n", run.agent_id, fmt_f64(*g)));
        }
        for (a, iz, e) in &run.euler_residuals {
            euler.push_str(&format!("{},{},{iz},{}\n", run.agent_id, fmt_f64(*a), fmt_f64(*e)));
        }
    }
    write(&dir.join("asymptotic_gaps.csv"), gaps)?;
    write(&dir.join("asymptotic_euler.csv"), euler)?;
    let summary = AsymptoticSummary {
        median_z_index: crate::asymptotic::median_state(&model.chain)?,
        final_gaps: runs.iter().map(|r| r.final_gap).collect(),
        max_abs_euler_residuals: runs.iter().map(|r| r.max_abs_euler_residual).collect(),
    };
    write(&dir.join("asymptotic_summary.json"), json(&summary))?;
    write(&dir.join("manifest_asymptotic.json"), json(&Manifest::new("asymptotic", cfg)))?;
    Ok(runs)
}
