//! Long-horizon learning runs and their distance from the rational policy.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::agent::{simulate_lifetime, stream_rng, Agent, Childhood, Environment, Hyperparameters};
use crate::error::{Error, Result};
use crate::markov::{sample_discrete, MarkovChain};
use crate::net::{Mlp, Policy};
use crate::population::draw_initial_state;
use crate::rational::{RationalPolicy, WealthDistribution};

const STREAM_TAG: u64 = 0xA5 << 56;

/// Productivity state holding the median of the stationary distribution.
pub fn median_state(chain: &MarkovChain) -> Result<usize> {
    let p = chain.stationary_distribution()?;
    let mut cum = 0.0;
    for (i, q) in p.iter().enumerate() {
        cum += q;
        if cum >= 0.5 {
            return Ok(i);
        }
    }
    Ok(p.len() - 1)
}

fn policy_with(network: Mlp, env: &Environment, hp: &Hyperparameters) -> Result<Policy> {
    Policy::new(network, env.bounds, hp.polyak_lambda)
}

/// `max |pi(a, z) - pi_re(a, z)|` over `n_points` evenly spaced `a` in `[0, a_max]`.
pub fn policy_gap(policy: &Policy, env: &Environment, re: &RationalPolicy, iz: usize, a_max: f64, n_points: usize) -> Result<f64> {
    let z = env.z(iz);
    let mut gap: f64 = 0.0;
    for k in 0..n_points {
        let a = a_max * k as f64 / (n_points - 1).max(1) as f64;
        let (x, _) = policy.action(a, z, env.prices)?;
        gap = gap.max((x - re.interpolate(a, iz)).abs());
    }
    Ok(gap)
}

/// `beta (1 + r) E[u'(c') | z] / u'(c) - 1` with both periods' choices taken
/// by `policy(a, z index)`.
pub fn euler_residual(env: &Environment, a: f64, iz: usize, mut policy: impl FnMut(f64, usize) -> Result<f64>) -> Result<f64> {
    let prices = env.prices;
    let x = policy(a, iz)?;
    let c = prices.cash_on_hand(a, env.z(iz)) - x;
    let mut expected = 0.0;
    for (j, &p) in env.chain.row(iz).iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let xn = policy(x, j)?;
        expected += p * env.prefs.marginal_utility(prices.cash_on_hand(x, env.z(j)) - xn)?;
    }
    Ok(env.gross_discount() * expected / env.prefs.marginal_utility(c)? - 1.0)
}

/// Euler residual of a learned policy.
pub fn learned_euler_residual(policy: &Policy, env: &Environment, a: f64, iz: usize) -> Result<f64> {
    euler_residual(env, a, iz, |s, j| Ok(policy.action(s, env.z(j), env.prices)?.0))
}

/// Random states: productivity from the stationary distribution excluding the
/// two extreme states, `a` uniform on `[1, a_max - 1]`, kept when the rational
/// choice is unconstrained.
pub fn interior_states<R: Rng + ?Sized>(re: &RationalPolicy, a_max: f64, n: usize, rng: &mut R) -> Result<Vec<(f64, usize)>> {
    let mut p = re.chain().stationary_distribution()?;
    let n_z = p.len();
    if n_z < 3 {
        return Err(Error::config("interior states need at least three productivity states"));
    }
    p[0] = 0.0;
    p[n_z - 1] = 0.0;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let a = rng.random_range(1.0..a_max - 1.0);
        let iz = sample_discrete(&p, rng);
        if re.interpolate(a, iz) > 1e-6 {
            out.push((a, iz));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticRun {
    pub agent_id: u64,
    /// `(age, gap)` measured with the network held at the start of each age,
    /// followed by the gap after the final period.
    pub gaps: Vec<(usize, f64)>,
    pub final_gap: f64,
    /// `(a, z index, residual)` of the final policy.
    pub euler_residuals: Vec<(f64, usize, f64)>,
    pub max_abs_euler_residual: f64,
}

#[derive(Debug, Clone)]
pub struct AsymptoticConfig {
    pub hp: Hyperparameters,
    pub n_agents: usize,
    pub master_seed: u64,
    /// Upper end of the wealth range on which gaps are measured.
    pub a_max: f64,
    pub gap_points: usize,
    pub euler_states: usize,
}

impl AsymptoticConfig {
    pub fn new(n_agents: usize, master_seed: u64) -> Self {
        AsymptoticConfig {
            hp: Hyperparameters::asymptotic(),
            n_agents,
            master_seed,
            a_max: 30.0,
            gap_points: 301,
            euler_states: 50,
        }
    }
}

/// Runs independent long-horizon learners; rational childhood, initial state
/// from the stationary wealth distribution.
pub fn run_asymptotic(
    cfg: &AsymptoticConfig,
    env: &Environment,
    re: &RationalPolicy,
    dist: &WealthDistribution,
) -> Result<Vec<AsymptoticRun>> {
    cfg.hp.validate()?;
    if cfg.n_agents == 0 || cfg.gap_points < 2 || !(cfg.a_max > 2.0) {
        return Err(Error::config("asymptotic run needs agents, at least two gap points and a_max > 2"));
    }
    let iz = median_state(&env.chain)?;
    let ages: Vec<usize> = (0..cfg.hp.life_t).collect();
    (0..cfg.n_agents as u64)
        .into_par_iter()
        .map(|id| {
            let mut rng = stream_rng(cfg.master_seed, STREAM_TAG | id);
            let initial = draw_initial_state(dist, re.grid().points(), &mut rng);
            let mut agent = Agent::new(cfg.hp.clone(), env, rng)?;
            let mut check_rng = stream_rng(cfg.master_seed, STREAM_TAG | (1 << 55) | id);
            let life = simulate_lifetime(&mut agent, env, Childhood::Rational(re), initial, &ages)?;
            let mut gaps = Vec::with_capacity(ages.len() + 1);
            for (age, net) in &life.snapshots {
                let p = policy_with(net.clone(), env, &cfg.hp)?;
                gaps.push((*age, policy_gap(&p, env, re, iz, cfg.a_max, cfg.gap_points)?));
            }
            let last = policy_with(life.final_network.clone(), env, &cfg.hp)?;
            let final_gap = policy_gap(&last, env, re, iz, cfg.a_max, cfg.gap_points)?;
            gaps.push((cfg.hp.life_t, final_gap));
            let euler_residuals = interior_states(re, cfg.a_max, cfg.euler_states, &mut check_rng)?
                .into_iter()
                .map(|(a, j)| Ok((a, j, learned_euler_residual(&last, env, a, j)?)))
                .collect::<Result<Vec<_>>>()?;
            let max_abs_euler_residual = euler_residuals.iter().fold(0.0_f64, |m, r| m.max(r.2.abs()));
            Ok(AsymptoticRun {
                agent_id: id,
                gaps,
                final_gap,
                euler_residuals,
                max_abs_euler_residual,
            })
        })
        .collect()
}
