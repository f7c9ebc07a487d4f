#![allow(dead_code)]

use std::sync::OnceLock;

use nn_economy::agent::{batch_gradient_vec, batch_objective, stream_rng, target_actions, Environment, Episode, Hyperparameters};
use nn_economy::economy::{Preferences, Prices, Technology};
use nn_economy::markov::{ArOneSpec, MarkovChain};
use nn_economy::net::{Clip, Mlp, Policy};
use nn_economy::population::{simulate_population, PanelDataset, SimulationConfig};
use nn_economy::rational::{find_equilibrium, AssetGrid, Equilibrium};
use nn_economy::run::with_threads;
use nn_economy::stats;
use rand::Rng;

pub struct Baseline {
    pub prefs: Preferences,
    pub chain: MarkovChain,
    pub grid: AssetGrid,
    pub eq: Equilibrium,
}

impl Baseline {
    pub fn env(&self, hp: &Hyperparameters) -> Environment {
        Environment::new(self.chain.clone(), self.eq.prices, self.prefs, hp).unwrap()
    }

    pub fn prices(&self) -> Prices {
        self.eq.prices
    }
}

/// Baseline calibration and equilibrium, solved once per test binary.
pub fn baseline() -> &'static Baseline {
    static CELL: OnceLock<Baseline> = OnceLock::new();
    CELL.get_or_init(|| {
        let prefs = Preferences::baseline();
        let chain = MarkovChain::tauchen(&ArOneSpec::baseline()).unwrap();
        let grid = AssetGrid::baseline();
        let eq = find_equilibrium(Technology::baseline(), prefs, &chain, &grid).unwrap();
        Baseline { prefs, chain, grid, eq }
    })
}

/// Naive forward pass returning the output and every hidden pre-activation.
pub fn reference_forward(net: &Mlp, a: f64, z: f64) -> (f64, Vec<f64>) {
    let sizes = net.sizes();
    let p = net.params();
    let mut x = vec![a, z];
    let mut pre_all = Vec::new();
    for l in 0..sizes.len() - 1 {
        let (w0, b0) = net.layer_offsets(l);
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let last = l + 2 == sizes.len();
        let mut y = vec![0.0; n_out];
        for j in 0..n_out {
            let mut s = p[b0 + j];
            for i in 0..n_in {
                s += p[w0 + j * n_in + i] * x[i];
            }
            if last {
                y[j] = s;
            } else {
                pre_all.push(s);
                y[j] = s.max(0.0);
            }
        }
        x = y;
    }
    (x[0], pre_all)
}

pub fn random_hidden<R: Rng>(rng: &mut R) -> Vec<usize> {
    let depth = rng.random_range(1..=4);
    (0..depth).map(|_| rng.random_range(1..=8)).collect()
}

/// Random network and input whose ReLU pre-activations sit at least `margin`
/// away from zero, so a small parameter perturbation cannot cross a kink.
pub fn net_away_from_kinks<R: Rng>(rng: &mut R, margin: f64) -> (Mlp, f64, f64) {
    loop {
        let net = Mlp::init(&random_hidden(rng), rng).unwrap();
        let a = rng.random_range(0.0..30.0);
        let z = rng.random_range(0.3..3.0);
        let (_, pre) = reference_forward(&net, a, z);
        if pre.iter().all(|s| s.abs() > margin) {
            return (net, a, z);
        }
    }
}

fn rel_err(x: &[f64], y: &[f64]) -> f64 {
    let diff: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = y.iter().map(|b| b * b).sum::<f64>().sqrt().max(1e-12);
    diff / scale
}

/// Largest relative error of the analytic parameter gradient against central
/// differences (h = 1e-5) over `n` random networks.
pub fn gradient_fd_check(n: usize, seed: u64) -> f64 {
    let mut rng = stream_rng(seed, 11);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let (net, a, z) = net_away_from_kinks(&mut rng, 1e-2);
        let g = net.grad(a, z);
        let mut fd = vec![0.0; g.len()];
        for (k, d) in fd.iter_mut().enumerate() {
            let mut up = net.clone();
            up.params_mut()[k] += h;
            let mut down = net.clone();
            down.params_mut()[k] -= h;
            *d = (reference_forward(&up, a, z).0 - reference_forward(&down, a, z).0) / (2.0 * h);
        }
        worst = worst.max(rel_err(&g, &fd));
    }
    worst
}

/// `u(c_a) - u(c_b)` for CRRA utility without cancellation, given `d = c_a - c_b`.
fn crra_diff(c_b: f64, d: f64, gamma: f64) -> f64 {
    let log_ratio = (d / c_b).ln_1p();
    if (gamma - 1.0).abs() < 1e-12 {
        log_ratio
    } else {
        c_b.powf(1.0 - gamma) * ((1.0 - gamma) * log_ratio).exp_m1() / (1.0 - gamma)
    }
}

/// Largest relative gap between the Euler-error gradient and five-point
/// differences of the two-period objective with the target action held fixed.
/// Objective differences are accumulated per episode from consumption changes
/// so that the stencil is not swamped by rounding in the utility levels.
pub fn chain_rule_identity_check(n: usize, seed: u64) -> f64 {
    let base = baseline();
    let hp = Hyperparameters::low();
    let env = base.env(&hp);
    let (beta, gamma, gross) = (env.prefs.beta, env.prefs.gamma, 1.0 + env.prices.r);
    let mut rng = stream_rng(seed, 12);
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < n {
        let net = Mlp::init(&random_hidden(&mut rng), &mut rng).unwrap();
        let policy = Policy::new(net.clone(), env.bounds, hp.polyak_lambda).unwrap();
        let batch: Vec<Episode> = (0..5)
            .map(|_| Episode {
                a: rng.random_range(0.5..30.0),
                z_index: rng.random_range(0..env.chain.n_states()),
                z_next_index: rng.random_range(0..env.chain.n_states()),
            })
            .collect();
        // only episodes with unclipped actions, interior consumption and no nearby kink
        let clean = batch.iter().all(|e| {
            let z = env.z(e.z_index);
            let (phi, pre) = reference_forward(&net, e.a, z);
            let (x, clip) = env.bounds.clip(phi, e.a, z, env.prices);
            clip == Clip::None
                && pre.iter().all(|s| s.abs() > 1e-2)
                && env.prices.cash_on_hand(e.a, z) - x > env.bounds.c_min
        });
        if !clean {
            continue;
        }
        let fixed = target_actions(&policy, &env, &batch);
        let c2_ok = batch.iter().zip(&fixed).all(|(e, &xn)| {
            let z = env.z(e.z_index);
            let x = policy.action(e.a, z, env.prices).unwrap().0;
            env.prices.cash_on_hand(x, env.z(e.z_next_index)) - xn > env.bounds.c_min
        });
        if !c2_ok {
            continue;
        }
        let level: f64 = batch
            .iter()
            .zip(&fixed)
            .map(|(e, &xn)| {
                let z = env.z(e.z_index);
                let x = e.a + env.bounds.mu * reference_forward(&net, e.a, z).0;
                let c1 = env.prices.cash_on_hand(e.a, z) - x;
                let c2 = env.prices.cash_on_hand(x, env.z(e.z_next_index)) - xn;
                env.prefs.utility(c1).unwrap() + beta * env.prefs.utility(c2).unwrap()
            })
            .sum();
        let lib = batch_objective(&policy, &env, &batch, &fixed);
        assert!((lib - level).abs() <= 1e-12 * level.abs(), "objective {lib} vs {level}");

        let g = batch_gradient_vec(&policy, &env, &batch);
        let mut fd = vec![0.0; g.len()];
        for (k, d) in fd.iter_mut().enumerate() {
            let shifted = |step: f64| {
                let mut m = net.clone();
                m.params_mut()[k] += step;
                m
            };
            // f(theta + s) - f(theta - s)
            let sym = |s: f64| -> f64 {
                let (up, down) = (shifted(s), shifted(-s));
                batch
                    .iter()
                    .zip(&fixed)
                    .map(|(e, &xn)| {
                        let z = env.z(e.z_index);
                        let x_down = e.a + env.bounds.mu * reference_forward(&down, e.a, z).0;
                        let dx = env.bounds.mu * (reference_forward(&up, e.a, z).0 - reference_forward(&down, e.a, z).0);
                        let c1 = env.prices.cash_on_hand(e.a, z) - x_down;
                        let c2 = env.prices.cash_on_hand(x_down, env.z(e.z_next_index)) - xn;
                        crra_diff(c1, -dx, gamma) + beta * crra_diff(c2, gross * dx, gamma)
                    })
                    .sum()
            };
            *d = (8.0 * sym(h) - sym(2.0 * h)) / (12.0 * h);
        }
        worst = worst.max(rel_err(&g, &fd));
        done += 1;
    }
    worst
}

/// Largest violation of `c = (1 + r) a + w z - a'` and `a_{t+1} = a'_t` over
/// every record, for both the learned and rational columns.
pub fn budget_identity_error(panel: &PanelDataset, prices: Prices) -> f64 {
    let mut worst: f64 = 0.0;
    for rows in panel.agents() {
        for (t, r) in rows.iter().enumerate() {
            let cash = prices.cash_on_hand(r.a, r.z);
            worst = worst.max((cash - r.action - r.consumption).abs());
            let cash_re = prices.cash_on_hand(r.a_re_counterfactual, r.z);
            worst = worst.max((cash_re - r.action_re_counterfactual - r.consumption_re_counterfactual).abs());
            if let Some(next) = rows.get(t + 1) {
                worst = worst.max((next.a - r.action).abs());
                worst = worst.max((next.a_re_counterfactual - r.action_re_counterfactual).abs());
            }
        }
    }
    worst
}

/// Largest row-sum error and stationary fixed-point residual over a set of
/// Tauchen chains.
pub fn markov_check(specs: &[ArOneSpec]) -> (f64, f64) {
    let (mut rows, mut fixed): (f64, f64) = (0.0, 0.0);
    for spec in specs {
        let chain = MarkovChain::tauchen(spec).unwrap();
        for i in 0..chain.n_states() {
            rows = rows.max((chain.row(i).iter().sum::<f64>() - 1.0).abs());
        }
        let p = chain.stationary_distribution().unwrap();
        let q = chain.push_forward(&p);
        fixed = fixed.max(p.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    (rows, fixed)
}

pub fn chain_param_grid() -> Vec<ArOneSpec> {
    let mut v = Vec::new();
    for &rho in &[0.0, 0.3, 0.6, 0.95] {
        for &sigma in &[0.1, 0.3] {
            for &n_states in &[3, 7, 20] {
                v.push(ArOneSpec { rho, sigma, n_states, width: 3.0 });
            }
        }
    }
    v
}

/// Brute-force Gini: mean absolute difference over twice the mean.
pub fn gini_brute(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let mut s = 0.0;
    for a in x {
        for b in x {
            s += (a - b).abs();
        }
    }
    s / (2.0 * n * n * mean)
}

/// Hand-computable inequality and mobility cases; returns the failures.
pub fn stats_oracle_failures() -> Vec<String> {
    let mut fails = Vec::new();
    let mut check = |name: &str, got: f64, want: f64| {
        if (got - want).abs() > 1e-12 {
            fails.push(format!("{name}: got {got}, want {want}"));
        }
    };
    check("gini [1,3]", stats::gini(&[1.0, 3.0]).unwrap(), 0.25);
    check("gini equal", stats::gini(&[5.0; 7]).unwrap(), 0.0);
    check("gini one holder", stats::gini(&[0.0, 0.0, 0.0, 2.0]).unwrap(), 0.75);
    let t = stats::top_shares(&[1.0, 2.0, 3.0, 4.0], &[0.25, 0.5]).unwrap();
    check("top 25%", t[0], 0.4);
    check("top 50%", t[1], 0.7);
    let t = stats::top_shares(&[1.0; 100], &[0.01, 0.05, 0.2]).unwrap();
    check("top 1% equal", t[0], 0.01);
    check("top 20% equal", t[2], 0.2);
    let ids: Vec<f64> = (0..25).map(f64::from).collect();
    check("shorrocks identity", stats::shorrocks_index(&ids, &ids, 5).unwrap(), 0.0);
    let rev: Vec<f64> = ids.iter().map(|x| -x).collect();
    // reversal: trace 1 (middle quintile stays) -> (5 - 1) / 4
    check("shorrocks reversal", stats::shorrocks_index(&ids, &rev, 5).unwrap(), 1.0);
    let spread: Vec<f64> = (0..25).map(|i| ((i % 5) * 5 + i / 5) as f64).collect();
    check("shorrocks spread", stats::shorrocks_index(&ids, &spread, 5).unwrap(), 1.0);
    fails
}

/// Clipped actions over random raw outputs and states; returns violations of
/// `a' in [0, min(a_cap, cash - c_min)]`.
pub fn clip_violations(n: usize, seed: u64) -> usize {
    let base = baseline();
    let env = base.env(&Hyperparameters::low());
    let b = env.bounds;
    let mut rng = stream_rng(seed, 13);
    let mut bad = 0;
    for _ in 0..n {
        let phi = rng.random_range(-1e5..1e5);
        let a = rng.random_range(0.0..b.a_cap);
        let z = env.z(rng.random_range(0..env.chain.n_states()));
        let (x, clip) = b.clip(phi, a, z, env.prices);
        let cash = env.prices.cash_on_hand(a, z);
        let ok = x >= b.a_floor - 1e-12 && x <= b.a_cap + 1e-12 && cash - x >= b.c_min - 1e-12;
        let unclipped = a + b.mu * phi;
        if !ok || (clip == Clip::None && x != unclipped) {
            bad += 1;
        }
    }
    bad
}

/// Panels from the same seed on one worker and on several.
pub fn thread_counts_agree(n_agents: usize, seed: u64) -> bool {
    let base = baseline();
    let mut hp = Hyperparameters::low();
    hp.learn_freq = 5;
    let env = base.env(&hp);
    let cfg = SimulationConfig::new(n_agents, hp, seed);
    let run = |threads| {
        with_threads(Some(threads), || {
            simulate_population(&cfg, &env, &base.eq.policy, &base.eq.distribution)
                .map(|p| PanelDataset::from_population(&p, 20).to_csv_string())
        })
        .unwrap()
    };
    let one = run(1);
    one == run(3) && one == run(8)
}
