//! Cohorts of learning agents, their rational counterfactuals and the panel
//! dataset every statistic is computed from.

use std::io::{Read, Write};
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{
    mpc_from, simulate_lifetime, stream_rng, Agent, Childhood, Environment, Hyperparameters, LifeHistory,
    PeriodRecord, MPC_STEP,
};
use crate::economy::Prices;
use crate::error::{Error, Result};
use crate::export::fmt_f64;
use crate::net::{Clip, Mlp};
use crate::rational::{RationalPolicy, WealthDistribution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Generation {
    /// Children of rational parents.
    First,
    /// Children of first-generation learning agents.
    Second,
}

impl Generation {
    pub fn number(self) -> u8 {
        match self {
            Generation::First => 1,
            Generation::Second => 2,
        }
    }
}

impl FromStr for Generation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" | "first" => Ok(Generation::First),
            "2" | "second" => Ok(Generation::Second),
            other => Err(Error::config(format!("unknown generation '{other}' (expected 1 or 2)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n_agents: usize,
    pub hp: Hyperparameters,
    pub master_seed: u64,
    pub generation: Generation,
    /// Ages at which the network parameters are recorded (start of the period).
    pub snapshot_ages: Vec<usize>,
}

impl SimulationConfig {
    pub fn new(n_agents: usize, hp: Hyperparameters, master_seed: u64) -> Self {
        SimulationConfig {
            n_agents,
            hp,
            master_seed,
            generation: Generation::First,
            snapshot_ages: vec![20, 99],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 {
            return Err(Error::config("a population needs at least one agent"));
        }
        self.hp.validate()
    }
}

/// Random stream of one agent: generation in the top byte, id below.
pub fn agent_stream(generation: Generation, agent_id: u64) -> u64 {
    ((generation.number() as u64) << 56) | agent_id
}

/// Draws a grid node `(a, z index)` with probability equal to its stationary mass.
pub fn draw_initial_state<R: Rng + ?Sized>(dist: &WealthDistribution, grid: &[f64], rng: &mut R) -> (f64, usize) {
    let n_a = dist.n_assets();
    let u: f64 = rng.random::<f64>() * dist.total();
    let mut cum = 0.0;
    let mut last = 0;
    for (k, &m) in dist.mass().iter().enumerate() {
        if m > 0.0 {
            last = k;
            cum += m;
            if u < cum {
                return (grid[k % n_a], k / n_a);
            }
        }
    }
    (grid[last % n_a], last / n_a)
}

/// One step of the rational counterfactual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RationalStep {
    pub a: f64,
    pub action: f64,
    pub consumption: f64,
    pub mpc: f64,
}

/// Wealth path a rational agent would follow from the same initial state under
/// the same productivity draws.
pub fn counterfactual_re_trajectory(records: &[PeriodRecord], re: &RationalPolicy, prices: Prices) -> Vec<RationalStep> {
    let mut out = Vec::with_capacity(records.len());
    let Some(first) = records.first() else {
        return out;
    };
    let mut a = first.a;
    let chain = re.chain();
    for rec in records {
        let iz = rec.z_index;
        let action = re.interpolate(a, iz);
        out.push(RationalStep {
            a,
            action,
            consumption: prices.cash_on_hand(a, chain.z(iz)) - action,
            mpc: mpc_from(|s| re.interpolate(s, iz), a, MPC_STEP, 0.0, prices.r),
        });
        a = action;
    }
    out
}

/// A finished agent together with its counterfactual.
#[derive(Debug, Clone)]
pub struct AgentRun {
    pub agent_id: u64,
    pub generation: Generation,
    pub history: LifeHistory,
    pub counterfactual: Vec<RationalStep>,
}

/// All agents of one simulation, ordered by id.
#[derive(Debug, Clone)]
pub struct Population {
    pub prices: Prices,
    /// Productivity levels by state index.
    pub states: Vec<f64>,
    pub agents: Vec<AgentRun>,
}

fn run_agent(
    id: u64,
    cfg: &SimulationConfig,
    env: &Environment,
    re: &RationalPolicy,
    childhood: Childhood<'_>,
    initial: impl FnOnce(&mut ChaCha8Rng) -> (f64, usize),
) -> Result<AgentRun> {
    let rng = stream_rng(cfg.master_seed, agent_stream(cfg.generation, id));
    let mut agent = Agent::new(cfg.hp.clone(), env, rng)?;
    let initial = initial(agent.rng());
    let history = simulate_lifetime(&mut agent, env, childhood, initial, &cfg.snapshot_ages)?;
    let counterfactual = counterfactual_re_trajectory(&history.records, re, env.prices);
    Ok(AgentRun {
        agent_id: id,
        generation: cfg.generation,
        history,
        counterfactual,
    })
}

/// First generation: initial `(a, z)` drawn from the rational stationary
/// distribution, childhood decisions taken by the rational policy.
pub fn simulate_population(
    cfg: &SimulationConfig,
    env: &Environment,
    re: &RationalPolicy,
    dist: &WealthDistribution,
) -> Result<Population> {
    cfg.validate()?;
    if cfg.generation != Generation::First {
        return Err(Error::config("second-generation runs need a parent panel"));
    }
    let grid = re.grid().points();
    let agents = (0..cfg.n_agents as u64)
        .into_par_iter()
        .map(|id| {
            run_agent(id, cfg, env, re, Childhood::Rational(re), |rng| {
                draw_initial_state(dist, grid, rng)
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Population {
        prices: env.prices,
        states: env.chain.states().to_vec(),
        agents,
    })
}

/// Second generation: child `i` replays the last `childhood` records of parent
/// `i`, then inherits the parent's final saving and draws productivity from
/// the transition row of the parent's last state.
pub fn simulate_second_generation(
    parents: &PanelDataset,
    cfg: &SimulationConfig,
    env: &Environment,
    re: &RationalPolicy,
) -> Result<Population> {
    cfg.validate()?;
    let ch = cfg.hp.childhood;
    let t = parents.life_t;
    if ch == 0 || t < 2 * ch {
        return Err(Error::config(format!(
            "replay needs a positive childhood and parent lives with at least {ch} adult records, got {t} periods"
        )));
    }
    let n = parents.n_agents();
    if cfg.n_agents > n {
        return Err(Error::config(format!(
            "{} children requested but the parent panel holds {n} agents",
            cfg.n_agents
        )));
    }
    let cfg = SimulationConfig {
        generation: Generation::Second,
        ..cfg.clone()
    };
    let agents = (0..cfg.n_agents)
        .into_par_iter()
        .map(|i| {
            let rows = parents.agent_rows(i);
            let records: Vec<PeriodRecord> = rows.iter().map(PanelRow::learned_record).collect();
            let id = rows[0].agent_id;
            let window = &records[t - ch..];
            let childhood = Childhood::Replay {
                records: window,
                previous: Some(records[t - ch - 1]),
            };
            run_agent(id, &cfg, env, re, childhood, |_| (window[0].a, window[0].z_index))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Population {
        prices: env.prices,
        states: env.chain.states().to_vec(),
        agents,
    })
}

/// One agent-period of the panel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub agent_id: u64,
    pub generation: u8,
    /// Calendar period; second-generation childhood overlaps the parent's last years.
    pub period: usize,
    pub age: usize,
    pub a: f64,
    pub z: f64,
    pub action: f64,
    pub consumption: f64,
    pub euler_err: f64,
    pub clip_flag: u8,
    pub a_re_counterfactual: f64,
    pub z_index: usize,
    pub mpc: f64,
    pub action_re_counterfactual: f64,
    pub consumption_re_counterfactual: f64,
    pub mpc_re_counterfactual: f64,
}

impl PanelRow {
    pub fn learned_record(&self) -> PeriodRecord {
        PeriodRecord {
            age: self.age,
            a: self.a,
            z_index: self.z_index,
            action: self.action,
            consumption: self.consumption,
            clip: Clip::from_code(self.clip_flag).unwrap_or(Clip::None),
            euler_error: self.euler_err,
            mpc: self.mpc,
        }
    }
}

pub const PANEL_COLUMNS: [&str; 16] = [
    "agent_id",
    "generation",
    "period",
    "age",
    "a",
    "z",
    "action",
    "consumption",
    "euler_err",
    "clip_flag",
    "a_re_counterfactual",
    "z_index",
    "mpc",
    "action_re_counterfactual",
    "consumption_re_counterfactual",
    "mpc_re_counterfactual",
];

/// Agent-period records, grouped by agent and ordered by age.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    pub life_t: usize,
    pub childhood: usize,
    pub rows: Vec<PanelRow>,
}

impl PanelDataset {
    pub fn from_population(pop: &Population, childhood: usize) -> Self {
        let life_t = pop.agents.first().map_or(0, |a| a.history.records.len());
        let mut rows = Vec::with_capacity(pop.agents.len() * life_t);
        for run in &pop.agents {
            let offset = match run.generation {
                Generation::First => 0,
                Generation::Second => life_t - childhood,
            };
            for (rec, re) in run.history.records.iter().zip(&run.counterfactual) {
                rows.push(PanelRow {
                    agent_id: run.agent_id,
                    generation: run.generation.number(),
                    period: rec.age + offset,
                    age: rec.age,
                    a: rec.a,
                    z: pop.states[rec.z_index],
                    action: rec.action,
                    consumption: rec.consumption,
                    euler_err: rec.euler_error,
                    clip_flag: rec.clip.code(),
                    a_re_counterfactual: re.a,
                    z_index: rec.z_index,
                    mpc: rec.mpc,
                    action_re_counterfactual: re.action,
                    consumption_re_counterfactual: re.consumption,
                    mpc_re_counterfactual: re.mpc,
                });
            }
        }
        PanelDataset { life_t, childhood, rows }
    }

    /// Panel of purely rational agents: the learned columns repeat the rational ones.
    pub fn rational(
        n_agents: usize,
        life_t: usize,
        childhood: usize,
        re: &RationalPolicy,
        dist: &WealthDistribution,
        seed: u64,
    ) -> Result<Self> {
        let prices = re.prices();
        let chain = re.chain();
        let grid = re.grid().points();
        let per_agent: Vec<Vec<PanelRow>> = (0..n_agents as u64)
            .into_par_iter()
            .map(|id| {
                let mut rng = stream_rng(seed, id);
                let (a0, z0) = draw_initial_state(dist, grid, &mut rng);
                let mut records = Vec::with_capacity(life_t);
                let mut iz = z0;
                for age in 0..life_t {
                    records.push(PeriodRecord {
                        age,
                        a: a0,
                        z_index: iz,
                        action: 0.0,
                        consumption: 0.0,
                        clip: Clip::None,
                        euler_error: f64::NAN,
                        mpc: f64::NAN,
                    });
                    iz = chain.sample_next(iz, &mut rng)?;
                }
                let path = counterfactual_re_trajectory(&records, re, prices);
                Ok(records
                    .iter()
                    .zip(&path)
                    .map(|(rec, s)| PanelRow {
                        agent_id: id,
                        generation: 0,
                        period: rec.age,
                        age: rec.age,
                        a: s.a,
                        z: chain.z(rec.z_index),
                        action: s.action,
                        consumption: s.consumption,
                        euler_err: f64::NAN,
                        clip_flag: 0,
                        a_re_counterfactual: s.a,
                        z_index: rec.z_index,
                        mpc: s.mpc,
                        action_re_counterfactual: s.action,
                        consumption_re_counterfactual: s.consumption,
                        mpc_re_counterfactual: s.mpc,
                    })
                    .collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PanelDataset {
            life_t,
            childhood,
            rows: per_agent.into_iter().flatten().collect(),
        })
    }

    pub fn n_agents(&self) -> usize {
        if self.life_t == 0 {
            0
        } else {
            self.rows.len() / self.life_t
        }
    }

    pub fn agent_rows(&self, i: usize) -> &[PanelRow] {
        &self.rows[i * self.life_t..(i + 1) * self.life_t]
    }

    pub fn agents(&self) -> impl Iterator<Item = &[PanelRow]> {
        self.rows.chunks_exact(self.life_t.max(1))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::domain(format!("writing panel: {e}"));
        w.write_record(PANEL_COLUMNS).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.agent_id.to_string(),
                r.generation.to_string(),
                r.period.to_string(),
                r.age.to_string(),
                fmt_f64(r.a),
                fmt_f64(r.z),
                fmt_f64(r.action),
                fmt_f64(r.consumption),
                fmt_f64(r.euler_err),
                r.clip_flag.to_string(),
                fmt_f64(r.a_re_counterfactual),
                r.z_index.to_string(),
                fmt_f64(r.mpc),
                fmt_f64(r.action_re_counterfactual),
                fmt_f64(r.consumption_re_counterfactual),
                fmt_f64(r.mpc_re_counterfactual),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::domain(format!("writing panel: {e}")))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("ascii output")
    }

    /// Parses a panel written by `write_csv`. `source` names the input in errors.
    pub fn read_csv<R: Read>(input: R, source: &str, childhood: usize) -> Result<Self> {
        let schema = |message: String| Error::Schema {
            path: source.into(),
            message,
        };
        let mut reader = csv::Reader::from_reader(input);
        let headers = reader
            .headers()
            .map_err(|e| schema(format!("unreadable header: {e}")))?
            .clone();
        for col in PANEL_COLUMNS {
            if !headers.iter().any(|h| h == col) {
                return Err(schema(format!("missing column '{col}'")));
            }
        }
        let mut rows: Vec<PanelRow> = Vec::new();
        for (line, rec) in reader.deserialize::<PanelRow>().enumerate() {
            rows.push(rec.map_err(|e| {
                let column = e
                    .position()
                    .and(match e.kind() {
                        csv::ErrorKind::Deserialize { err, .. } => err.field().map(|f| headers[f as usize].to_string()),
                        _ => None,
                    })
                    .unwrap_or_else(|| "?".into());
                schema(format!("row {}: column '{column}': {e}", line + 2))
            })?);
        }
        let life_t = rows.iter().take_while(|r| r.agent_id == rows[0].agent_id).count();
        if life_t == 0 || rows.len() % life_t != 0 {
            return Err(schema("agents do not all have the same number of records".into()));
        }
        for chunk in rows.chunks_exact(life_t) {
            let id = chunk[0].agent_id;
            if chunk.iter().enumerate().any(|(t, r)| r.agent_id != id || r.age != t) {
                return Err(schema(format!("records of agent {id} are not consecutive ages 0..{life_t}")));
            }
        }
        Ok(PanelDataset { life_t, childhood, rows })
    }
}

/// Saving rule evaluated on the two sweeps used for policy comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRow {
    pub agent_id: u64,
    pub age: usize,
    pub a_grid: f64,
    pub z_grid: f64,
    pub savings: f64,
    pub saving_rate: f64,
    /// `a` for the wealth sweep at the reference productivity, `z` for the
    /// productivity sweep at the reference wealth.
    pub sweep: char,
    pub z_index: usize,
}

/// Points at which saved networks are evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationGrid {
    pub a_points: Vec<f64>,
    /// Productivity state of the wealth sweep.
    pub z_ref: usize,
    /// Wealth level of the productivity sweep.
    pub a_ref: f64,
}

impl EvaluationGrid {
    /// Wealth 0, 1, ..., 30 at the state closest to mean productivity, and
    /// every state at mean rational wealth.
    pub fn standard(re: &RationalPolicy, dist: &WealthDistribution) -> Result<Self> {
        let chain = re.chain();
        let pz = chain.stationary_distribution()?;
        let mean_z = chain.mean_z(&pz);
        let z_ref = (0..chain.n_states())
            .min_by(|&i, &j| (chain.z(i) - mean_z).abs().total_cmp(&(chain.z(j) - mean_z).abs()))
            .unwrap_or(0);
        Ok(EvaluationGrid {
            a_points: (0..=30).map(|a| a as f64).collect(),
            z_ref,
            a_ref: dist.capital(re.grid()),
        })
    }

    /// `(sweep, a, z index)` in output order.
    pub fn points(&self, n_states: usize) -> Vec<(char, f64, usize)> {
        let mut out: Vec<(char, f64, usize)> = self.a_points.iter().map(|&a| ('a', a, self.z_ref)).collect();
        out.extend((0..n_states).map(|iz| ('z', self.a_ref, iz)));
        out
    }
}

/// Evaluates every snapshot of every agent on `grid`.
pub fn snapshot_table(pop: &Population, env: &Environment, grid: &EvaluationGrid) -> Result<Vec<SnapshotRow>> {
    let points = grid.points(env.chain.n_states());
    let prices = env.prices;
    let mut rows = Vec::new();
    for run in &pop.agents {
        for (age, net) in &run.history.snapshots {
            for &(sweep, a, iz) in &points {
                let z = env.z(iz);
                let phi = net.forward(a, z)?;
                let (x, _) = env.bounds.clip(phi, a, z, prices);
                rows.push(SnapshotRow {
                    agent_id: run.agent_id,
                    age: *age,
                    a_grid: a,
                    z_grid: z,
                    savings: x,
                    saving_rate: (x - a) / prices.income(a, z),
                    sweep,
                    z_index: iz,
                });
            }
        }
    }
    Ok(rows)
}

pub const SNAPSHOT_COLUMNS: [&str; 8] = [
    "agent_id",
    "age",
    "a_grid",
    "z_grid",
    "savings",
    "saving_rate",
    "sweep",
    "z_index",
];

pub fn write_snapshots_csv<W: Write>(rows: &[SnapshotRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::domain(format!("writing snapshots: {e}"));
    w.write_record(SNAPSHOT_COLUMNS).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.agent_id.to_string(),
            r.age.to_string(),
            fmt_f64(r.a_grid),
            fmt_f64(r.z_grid),
            fmt_f64(r.savings),
            fmt_f64(r.saving_rate),
            r.sweep.to_string(),
            r.z_index.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::domain(format!("writing snapshots: {e}")))?;
    Ok(())
}

pub fn read_snapshots_csv<R: Read>(input: R, source: &str) -> Result<Vec<SnapshotRow>> {
    let mut reader = csv::Reader::from_reader(input);
    let schema = |message: String| Error::Schema {
        path: source.into(),
        message,
    };
    let headers = reader
        .headers()
        .map_err(|e| schema(format!("unreadable header: {e}")))?
        .clone();
    for col in SNAPSHOT_COLUMNS {
        if !headers.iter().any(|h| h == col) {
            return Err(schema(format!("missing column '{col}'")));
        }
    }
    reader
        .deserialize::<SnapshotRow>()
        .enumerate()
        .map(|(line, rec)| rec.map_err(|e| schema(format!("row {}: {e}", line + 2))))
        .collect()
}

/// One JSON object per line: agent id, age and the network.
pub fn snapshots_jsonl(pop: &Population) -> String {
    #[derive(Serialize)]
    struct Line<'a> {
        agent_id: u64,
        age: usize,
        network: &'a Mlp,
    }
    let mut out = String::new();
    for run in &pop.agents {
        for (age, net) in &run.history.snapshots {
            let line = Line {
                agent_id: run.agent_id,
                age: *age,
                network: net,
            };
            out.push_str(&serde_json::to_string(&line).expect("snapshot serializes"));
            out.push('\n');
        }
    }
    out
}

/// Mean and standard deviation of `a - a_re` by age.
pub fn diversion_by_age(panel: &PanelDataset) -> Vec<(usize, f64, f64)> {
    (0..panel.life_t)
        .map(|t| {
            let d: Vec<f64> = panel
                .agents()
                .map(|rows| rows[t].a - rows[t].a_re_counterfactual)
                .collect();
            let n = d.len().max(1) as f64;
            let mean = d.iter().sum::<f64>() / n;
            let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            (t, mean, var.sqrt())
        })
        .collect()
}
