//! Rational-expectations benchmark.
//!
//! The household problem is solved by value function iteration with a
//! continuous choice of next-period assets: the expected continuation value is
//! interpolated with a shape-preserving cubic and maximized by Brent's method.
//! Howard policy-evaluation sweeps between improvement steps speed up
//! convergence. The stationary distribution uses two-point lotteries for
//! off-grid savings, and the equilibrium interest rate clears the capital
//! market by bisection.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::economy::{labor_supply, Preferences, Prices, Technology};
use crate::error::{Error, Result};
use crate::markov::MarkovChain;
use crate::numeric::{brent_max, interp_linear, locate, Steffen};

/// Asset levels on which the rational policy is computed. The first point is
/// the borrowing limit, zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetGrid {
    points: Vec<f64>,
}

impl AssetGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::domain("asset grid needs at least three points"));
        }
        if points[0] != 0.0 {
            return Err(Error::domain("asset grid must start at the borrowing limit 0"));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) || !points.iter().all(|p| p.is_finite()) {
            return Err(Error::domain("asset grid must be strictly increasing and finite"));
        }
        Ok(AssetGrid { points })
    }

    /// `n` points on `[0, max]`, `a_i = max (i / (n-1))^2`, dense near zero.
    pub fn squared(n: usize, max: f64) -> Result<Self> {
        if n < 3 || !(max > 0.0) {
            return Err(Error::domain(format!("invalid grid spec n = {n}, max = {max}")));
        }
        let last = (n - 1) as f64;
        Self::new((0..n).map(|i| max * (i as f64 / last).powi(2)).collect())
    }

    /// 300 points up to 60.
    pub fn baseline() -> Self {
        Self::squared(300, 60.0).expect("valid baseline grid")
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn max(&self) -> f64 {
        *self.points.last().unwrap()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct VfiOptions {
    /// Sup-norm value change relative to the largest absolute value.
    pub tol: f64,
    pub max_iter: usize,
    pub howard_sweeps: usize,
    pub brent_tol: f64,
}

impl Default for VfiOptions {
    fn default() -> Self {
        VfiOptions {
            tol: 1e-9,
            max_iter: 2000,
            howard_sweeps: 50,
            brent_tol: 1e-11,
        }
    }
}

/// Optimal savings `a' = pi(a, z)` and value on the asset grid, for every
/// productivity state.
#[derive(Debug)]
pub struct RationalPolicy {
    grid: AssetGrid,
    chain: MarkovChain,
    prices: Prices,
    prefs: Preferences,
    /// `[iz * n_a + ia]`
    savings: Vec<f64>,
    value: Vec<f64>,
    iterations: usize,
    top_binding: usize,
    clamped: AtomicUsize,
}

impl Clone for RationalPolicy {
    fn clone(&self) -> Self {
        RationalPolicy {
            grid: self.grid.clone(),
            chain: self.chain.clone(),
            prices: self.prices,
            prefs: self.prefs,
            savings: self.savings.clone(),
            value: self.value.clone(),
            iterations: self.iterations,
            top_binding: self.top_binding,
            clamped: AtomicUsize::new(self.clamped.load(Ordering::Relaxed)),
        }
    }
}

impl RationalPolicy {
    /// Wraps an arbitrary savings rule (laid out as `[iz][ia]`) so that it can
    /// be simulated and aggregated like a solved one. Values are left at zero.
    pub fn from_savings(
        grid: AssetGrid,
        chain: MarkovChain,
        prices: Prices,
        prefs: Preferences,
        savings: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let (n_a, n_z) = (grid.len(), chain.n_states());
        if savings.len() != n_z || savings.iter().any(|row| row.len() != n_a) {
            return Err(Error::domain("savings table must be n_z rows of n_a entries"));
        }
        let savings: Vec<f64> = savings.into_iter().flatten().collect();
        if savings.iter().any(|&s| !(0.0..=grid.max()).contains(&s)) {
            return Err(Error::domain("savings must lie on [0, grid max]"));
        }
        let top = grid.max();
        let top_binding = savings.iter().filter(|&&s| s >= top * (1.0 - 1e-12)).count();
        Ok(RationalPolicy {
            value: vec![0.0; savings.len()],
            top_binding,
            grid,
            chain,
            prices,
            prefs,
            savings,
            iterations: 0,
            clamped: AtomicUsize::new(0),
        })
    }

    pub fn grid(&self) -> &AssetGrid {
        &self.grid
    }

    pub fn chain(&self) -> &MarkovChain {
        &self.chain
    }

    pub fn prices(&self) -> Prices {
        self.prices
    }

    pub fn prefs(&self) -> Preferences {
        self.prefs
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Number of nodes whose savings sit at the top of the grid.
    pub fn top_binding_nodes(&self) -> usize {
        self.top_binding
    }

    #[inline]
    fn idx(&self, ia: usize, iz: usize) -> usize {
        iz * self.grid.len() + ia
    }

    pub fn savings_at(&self, ia: usize, iz: usize) -> f64 {
        self.savings[self.idx(ia, iz)]
    }

    pub fn value_at(&self, ia: usize, iz: usize) -> f64 {
        self.value[self.idx(ia, iz)]
    }

    /// Savings along the asset grid for productivity state `iz`.
    pub fn savings_row(&self, iz: usize) -> &[f64] {
        let n = self.grid.len();
        &self.savings[iz * n..(iz + 1) * n]
    }

    pub fn consumption_at(&self, ia: usize, iz: usize) -> f64 {
        self.prices.cash_on_hand(self.grid.points[ia], self.chain.z(iz)) - self.savings_at(ia, iz)
    }

    /// Linear interpolation of the savings rule in `a` at fixed `iz`. Inputs
    /// off the grid are clamped and counted in [`Self::clamp_count`].
    pub fn interpolate(&self, a: f64, iz: usize) -> f64 {
        let pts = &self.grid.points;
        if a < pts[0] || a > self.grid.max() || a.is_nan() {
            self.clamped.fetch_add(1, Ordering::Relaxed);
        }
        let a = if a.is_nan() { 0.0 } else { a.clamp(pts[0], self.grid.max()) };
        interp_linear(pts, self.savings_row(iz), a).clamp(0.0, self.grid.max())
    }

    /// Number of interpolation requests that fell outside the grid.
    pub fn clamp_count(&self) -> usize {
        self.clamped.load(Ordering::Relaxed)
    }

    /// Whether the borrowing limit binds at a node.
    pub fn is_constrained(&self, ia: usize, iz: usize) -> bool {
        self.savings_at(ia, iz) <= 1e-10
    }

    /// `beta (1+r) E[u'(c')] / u'(c) - 1` at a grid node, with `c'` from the
    /// interpolated policy. `None` where the borrowing limit binds.
    pub fn euler_residual(&self, ia: usize, iz: usize) -> Option<f64> {
        if self.is_constrained(ia, iz) {
            return None;
        }
        let next = self.savings_at(ia, iz);
        let c = self.consumption_at(ia, iz);
        let expected: f64 = self
            .chain
            .row(iz)
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(jz, &p)| {
                let c_next = self.prices.cash_on_hand(next, self.chain.z(jz)) - self.interpolate(next, jz);
                p * self.prefs.marginal_utility_unchecked(c_next)
            })
            .sum();
        Some(
            self.prefs.beta * (1.0 + self.prices.r) * expected / self.prefs.marginal_utility_unchecked(c)
                - 1.0,
        )
    }
}

/// `beta (1+r) u'(c_next) / u'(c_now) - 1`.
pub fn euler_error(c_now: f64, c_next: f64, prices: Prices, prefs: Preferences) -> Result<f64> {
    Ok(prefs.beta * (1.0 + prices.r) * prefs.marginal_utility(c_next)? / prefs.marginal_utility(c_now)? - 1.0)
}

/// Solves the household problem at fixed prices with default options.
pub fn solve_vfi(
    prices: Prices,
    chain: &MarkovChain,
    grid: &AssetGrid,
    prefs: Preferences,
) -> Result<RationalPolicy> {
    solve_vfi_with(prices, chain, grid, prefs, &VfiOptions::default(), None)
}

/// Value function iteration with an optional warm-start value table
/// (`[iz * n_a + ia]`).
pub fn solve_vfi_with(
    prices: Prices,
    chain: &MarkovChain,
    grid: &AssetGrid,
    prefs: Preferences,
    opts: &VfiOptions,
    warm_value: Option<&[f64]>,
) -> Result<RationalPolicy> {
    if prefs.beta * (1.0 + prices.r) >= 1.0 {
        log::warn!(
            "beta (1 + r) = {} >= 1; household savings may not be bounded",
            prefs.beta * (1.0 + prices.r)
        );
    }
    let pts = grid.points();
    let (n_a, n_z) = (grid.len(), chain.n_states());
    let mut value: Vec<f64> = match warm_value {
        Some(v) if v.len() == n_a * n_z && v.iter().all(|x| x.is_finite()) => v.to_vec(),
        _ => (0..n_z)
            .flat_map(|iz| {
                let z = chain.z(iz);
                pts.iter().map(move |&a| {
                    let c = prices.income(a, z).max(0.1 * prices.w * z);
                    prefs.utility_unchecked(c) / (1.0 - prefs.beta)
                })
            })
            .collect(),
    };
    let mut savings = vec![0.0; n_a * n_z];

    let mut diff = f64::INFINITY;
    for iter in 1..=opts.max_iter {
        let expected = expected_values(&value, chain, n_a);
        let improved: Vec<(Vec<f64>, Vec<f64>)> = (0..n_z)
            .into_par_iter()
            .map(|iz| improve_row(iz, &expected[iz], pts, chain, prices, prefs, opts.brent_tol))
            .collect();

        diff = 0.0;
        let scale = value.iter().fold(1e-12_f64, |m, v| m.max(v.abs()));
        for (iz, (row_s, row_v)) in improved.into_iter().enumerate() {
            let base = iz * n_a;
            for ia in 0..n_a {
                diff = diff.max((row_v[ia] - value[base + ia]).abs() / scale);
                value[base + ia] = row_v[ia];
                savings[base + ia] = row_s[ia];
            }
        }
        if diff < opts.tol {
            let top = grid.max();
            let top_binding = savings.iter().filter(|&&s| s >= top * (1.0 - 1e-12)).count();
            if top_binding > 0 {
                log::debug!("savings reach the grid top ({top}) at {top_binding} nodes");
            }
            return Ok(RationalPolicy {
                grid: grid.clone(),
                chain: chain.clone(),
                prices,
                prefs,
                savings,
                value,
                iterations: iter,
                top_binding,
                clamped: AtomicUsize::new(0),
            });
        }
        howard_sweeps(&mut value, &savings, pts, chain, prices, prefs, opts.howard_sweeps);
    }
    Err(Error::NoConvergence {
        what: "value function iteration",
        iterations: opts.max_iter,
        residual: diff,
    })
}

/// `EV_z(a_k) = sum_z' Gamma_{z z'} V(a_k, z')` for every `z`.
fn expected_values(value: &[f64], chain: &MarkovChain, n_a: usize) -> Vec<Vec<f64>> {
    let n_z = chain.n_states();
    (0..n_z)
        .map(|iz| {
            let mut ev = vec![0.0; n_a];
            for (jz, &p) in chain.row(iz).iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for (e, v) in ev.iter_mut().zip(&value[jz * n_a..(jz + 1) * n_a]) {
                    *e += p * v;
                }
            }
            ev
        })
        .collect()
}

fn improve_row(
    iz: usize,
    expected: &[f64],
    pts: &[f64],
    chain: &MarkovChain,
    prices: Prices,
    prefs: Preferences,
    tol: f64,
) -> (Vec<f64>, Vec<f64>) {
    let spline = Steffen::new(pts, expected);
    let z = chain.z(iz);
    let top = *pts.last().unwrap();
    let mut lower = 0.0_f64;
    let mut row_s = Vec::with_capacity(pts.len());
    let mut row_v = Vec::with_capacity(pts.len());
    for &a in pts {
        let cash = prices.cash_on_hand(a, z);
        let upper = (cash - 1e-10).min(top);
        let lo = lower.min(upper);
        let objective = |next: f64| {
            prefs.utility_unchecked(cash - next) + prefs.beta * spline.eval(pts, expected, next)
        };
        let (next, v) = brent_max(objective, lo, upper, tol);
        lower = next;
        row_s.push(next);
        row_v.push(v);
    }
    (row_s, row_v)
}

fn howard_sweeps(
    value: &mut [f64],
    savings: &[f64],
    pts: &[f64],
    chain: &MarkovChain,
    prices: Prices,
    prefs: Preferences,
    sweeps: usize,
) {
    let (n_a, n_z) = (pts.len(), chain.n_states());
    let located: Vec<usize> = savings.iter().map(|&s| locate(pts, s)).collect();
    let flow: Vec<f64> = (0..n_z)
        .flat_map(|iz| {
            let z = chain.z(iz);
            (0..n_a).map(move |ia| (iz, ia, z))
        })
        .map(|(iz, ia, z)| {
            let c = prices.cash_on_hand(pts[ia], z) - savings[iz * n_a + ia];
            prefs.utility_unchecked(c)
        })
        .collect();
    for _ in 0..sweeps {
        let expected = expected_values(value, chain, n_a);
        for iz in 0..n_z {
            let ev = &expected[iz];
            let spline = Steffen::new(pts, ev);
            for ia in 0..n_a {
                let k = iz * n_a + ia;
                value[k] = flow[k] + prefs.beta * spline.eval_in(pts, ev, located[k], savings[k]);
            }
        }
    }
}

/// Joint distribution over (asset node, productivity state).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WealthDistribution {
    n_a: usize,
    n_z: usize,
    /// `[iz * n_a + ia]`
    mass: Vec<f64>,
}

impl WealthDistribution {
    pub fn new(n_a: usize, n_z: usize, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != n_a * n_z || mass.iter().any(|&m| !(m >= 0.0)) {
            return Err(Error::domain("mass must be n_a * n_z nonnegative entries"));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::domain(format!("total mass is {total}, not 1")));
        }
        Ok(WealthDistribution { n_a, n_z, mass })
    }

    /// All mass on one asset node, spread over productivity by `z_weights`.
    pub fn point_mass(n_a: usize, ia: usize, z_weights: &[f64]) -> Result<Self> {
        let n_z = z_weights.len();
        let mut mass = vec![0.0; n_a * n_z];
        for (iz, &p) in z_weights.iter().enumerate() {
            mass[iz * n_a + ia] = p;
        }
        Self::new(n_a, n_z, mass)
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn at(&self, ia: usize, iz: usize) -> f64 {
        self.mass[iz * self.n_a + ia]
    }

    pub fn n_assets(&self) -> usize {
        self.n_a
    }

    pub fn n_states(&self) -> usize {
        self.n_z
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Marginal distribution over asset nodes.
    pub fn asset_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_a];
        for iz in 0..self.n_z {
            for (o, m) in out.iter_mut().zip(&self.mass[iz * self.n_a..(iz + 1) * self.n_a]) {
                *o += m;
            }
        }
        out
    }

    /// Aggregate wealth `sum m(a, z) a`.
    pub fn capital(&self, grid: &AssetGrid) -> f64 {
        self.asset_marginal()
            .iter()
            .zip(grid.points())
            .map(|(m, a)| m * a)
            .sum()
    }

    /// Total variation distance to another distribution of the same shape.
    pub fn tv_distance(&self, other: &WealthDistribution) -> f64 {
        0.5 * self
            .mass
            .iter()
            .zip(&other.mass)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

const DIST_TOL: f64 = 1e-12;
const DIST_MAX_ITER: usize = 500_000;
/// Stationary mass allowed on the top grid node before the grid counts as too small.
const TOP_MASS_TOL: f64 = 1e-6;

/// Stationary distribution of `(a, z)` under the policy, starting from wealth
/// spread uniformly over the grid with stationary productivity.
pub fn stationary_wealth(policy: &RationalPolicy) -> Result<WealthDistribution> {
    let n_a = policy.grid.len();
    let pz = policy.chain.stationary_distribution()?;
    let mass = pz
        .iter()
        .flat_map(|&p| std::iter::repeat_n(p / n_a as f64, n_a))
        .collect();
    stationary_wealth_from(policy, WealthDistribution::new(n_a, pz.len(), mass)?)
}

/// Iterates the induced transition from `initial` until the total variation
/// change falls below 1e-12.
pub fn stationary_wealth_from(policy: &RationalPolicy, initial: WealthDistribution) -> Result<WealthDistribution> {
    let transition = LotteryTransition::new(policy);
    let mut current = initial;
    if current.n_a != transition.n_a || current.n_z != transition.n_z {
        return Err(Error::domain("initial distribution shape does not match the policy"));
    }
    let mut change = f64::INFINITY;
    for _ in 0..DIST_MAX_ITER {
        let next = transition.apply(policy.chain(), &current);
        change = next.tv_distance(&current);
        current = next;
        if change < DIST_TOL {
            let total = current.total();
            current.mass.iter_mut().for_each(|m| *m /= total);
            let n_a = current.n_a;
            let at_top: f64 = (0..current.n_z).map(|iz| current.at(n_a - 1, iz)).sum();
            if at_top > TOP_MASS_TOL {
                return Err(Error::GridTooSmall {
                    grid_max: policy.grid.max(),
                });
            }
            return Ok(current);
        }
    }
    Err(Error::NoConvergence {
        what: "stationary wealth distribution",
        iterations: DIST_MAX_ITER,
        residual: change,
    })
}

/// Precomputed lottery split of every node's savings between neighbouring grid points.
pub(crate) struct LotteryTransition {
    n_a: usize,
    n_z: usize,
    lower: Vec<usize>,
    weight_up: Vec<f64>,
}

impl LotteryTransition {
    pub(crate) fn new(policy: &RationalPolicy) -> Self {
        let pts = policy.grid.points();
        let (lower, weight_up) = policy
            .savings
            .iter()
            .map(|&s| {
                let k = locate(pts, s);
                let t = ((s - pts[k]) / (pts[k + 1] - pts[k])).clamp(0.0, 1.0);
                (k, t)
            })
            .unzip();
        LotteryTransition {
            n_a: policy.grid.len(),
            n_z: policy.chain.n_states(),
            lower,
            weight_up,
        }
    }

    pub(crate) fn apply(&self, chain: &MarkovChain, dist: &WealthDistribution) -> WealthDistribution {
        let (n_a, n_z) = (self.n_a, self.n_z);
        // mass over next assets, still indexed by today's z
        let mut moved = vec![0.0; n_a * n_z];
        for (k, &m) in dist.mass.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let base = (k / n_a) * n_a;
            let lo = self.lower[k];
            let up = self.weight_up[k];
            moved[base + lo] += m * (1.0 - up);
            moved[base + lo + 1] += m * up;
        }
        let mut next = vec![0.0; n_a * n_z];
        for iz in 0..n_z {
            let src = &moved[iz * n_a..(iz + 1) * n_a];
            for (jz, &p) in chain.row(iz).iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for (n, s) in next[jz * n_a..(jz + 1) * n_a].iter_mut().zip(src) {
                    *n += p * s;
                }
            }
        }
        WealthDistribution { n_a, n_z, mass: next }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EquilibriumOptions {
    /// Interest-rate bracket; defaults to `(-delta + 1e-4, 1/beta - 1 - 1e-4)`.
    pub bracket: Option<(f64, f64)>,
    /// Relative capital-market gap `|K - K_supply| / K` accepted as cleared.
    pub tol: f64,
    pub max_iter: usize,
    pub vfi: VfiOptions,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        EquilibriumOptions {
            bracket: None,
            tol: 1e-4,
            max_iter: 100,
            vfi: VfiOptions::default(),
        }
    }
}

/// Stationary rational-expectations equilibrium.
#[derive(Debug, Clone)]
pub struct Equilibrium {
    pub prices: Prices,
    /// Capital demanded by firms at `prices.r`.
    pub capital_demand: f64,
    /// Aggregate household wealth under the stationary distribution.
    pub capital_supply: f64,
    pub labor: f64,
    pub policy: RationalPolicy,
    pub distribution: WealthDistribution,
    pub bisection_steps: usize,
}

/// Market outcome at one trial interest rate.
struct Trial {
    policy: RationalPolicy,
    distribution: WealthDistribution,
    demand: f64,
    supply: f64,
}

enum Outcome {
    Solved(Trial),
    /// Firms want more capital than the asset grid can hold, so demand
    /// exceeds supply without solving the household problem.
    DemandOffGrid,
    /// Household savings run off the top of the grid: supply exceeds demand.
    SupplyOffGrid,
}

impl Outcome {
    /// Sign-carrying gap `K - K_supply`.
    fn gap(&self) -> f64 {
        match self {
            Outcome::Solved(t) => t.demand - t.supply,
            Outcome::DemandOffGrid => f64::INFINITY,
            Outcome::SupplyOffGrid => f64::NEG_INFINITY,
        }
    }
}

struct Market<'a> {
    tech: Technology,
    prefs: Preferences,
    chain: &'a MarkovChain,
    grid: &'a AssetGrid,
    labor: f64,
    opts: EquilibriumOptions,
    warm_value: Option<Vec<f64>>,
    warm_dist: Option<WealthDistribution>,
}

impl Market<'_> {
    fn trial(&mut self, r: f64) -> Result<Outcome> {
        let demand = self.tech.capital_demand(r, self.labor)?;
        if demand > self.grid.max() {
            return Ok(Outcome::DemandOffGrid);
        }
        let prices = self.tech.prices_from_rate(r, self.labor)?;
        let policy = solve_vfi_with(
            prices,
            self.chain,
            self.grid,
            self.prefs,
            &self.opts.vfi,
            self.warm_value.as_deref(),
        )?;
        self.warm_value = Some(policy.value.clone());
        let distribution = match self.warm_dist.take() {
            Some(init) => stationary_wealth_from(&policy, init),
            None => stationary_wealth(&policy),
        };
        let distribution = match distribution {
            Ok(d) => d,
            Err(Error::GridTooSmall { .. }) => return Ok(Outcome::SupplyOffGrid),
            Err(e) => return Err(e),
        };
        self.warm_dist = Some(distribution.clone());
        let supply = distribution.capital(self.grid);
        log::debug!("r = {r:.8}: demand {demand:.6}, supply {supply:.6}");
        Ok(Outcome::Solved(Trial {
            policy,
            distribution,
            demand,
            supply,
        }))
    }
}

/// Capital-market gap `K(r) - K_supply(r)` at a given rate. Infinite when
/// either side leaves the asset grid (`+inf` for demand, `-inf` for supply).
pub fn capital_gap(
    r: f64,
    tech: Technology,
    prefs: Preferences,
    chain: &MarkovChain,
    grid: &AssetGrid,
) -> Result<f64> {
    let mut market = Market {
        tech,
        prefs,
        chain,
        grid,
        labor: labor_supply(chain)?,
        opts: EquilibriumOptions::default(),
        warm_value: None,
        warm_dist: None,
    };
    Ok(market.trial(r)?.gap())
}

/// Finds the interest rate at which household wealth equals firms' capital demand.
pub fn find_equilibrium(
    tech: Technology,
    prefs: Preferences,
    chain: &MarkovChain,
    grid: &AssetGrid,
) -> Result<Equilibrium> {
    find_equilibrium_with(tech, prefs, chain, grid, &EquilibriumOptions::default())
}

pub fn find_equilibrium_with(
    tech: Technology,
    prefs: Preferences,
    chain: &MarkovChain,
    grid: &AssetGrid,
    opts: &EquilibriumOptions,
) -> Result<Equilibrium> {
    let (mut lo, mut hi) = opts
        .bracket
        .unwrap_or((-tech.delta + 1e-4, 1.0 / prefs.beta - 1.0 - 1e-4));
    if !(lo < hi) {
        return Err(Error::config(format!("empty interest-rate bracket ({lo}, {hi})")));
    }
    let labor = labor_supply(chain)?;
    let mut market = Market {
        tech,
        prefs,
        chain,
        grid,
        labor,
        opts: *opts,
        warm_value: None,
        warm_dist: None,
    };

    // demand must exceed supply at the bottom of the bracket and fall short at the top
    let low_gap = market.trial(lo)?.gap();
    let high_gap = market.trial(hi)?.gap();
    if !(low_gap > 0.0 && high_gap < 0.0) {
        return Err(Error::config(format!(
            "interest-rate bracket ({lo}, {hi}) does not straddle capital-market clearing \
             (gaps {low_gap:.4e} and {high_gap:.4e})"
        )));
    }

    for step in 1..=opts.max_iter {
        let mid = 0.5 * (lo + hi);
        let outcome = market.trial(mid)?;
        let gap = outcome.gap();
        if let Outcome::Solved(t) = outcome {
            if gap.abs() / t.demand < opts.tol {
                return Ok(Equilibrium {
                    prices: t.policy.prices,
                    capital_demand: t.demand,
                    capital_supply: t.supply,
                    labor,
                    policy: t.policy,
                    distribution: t.distribution,
                    bisection_steps: step,
                });
            }
        }
        if gap > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Err(Error::NoConvergence {
        what: "equilibrium interest rate bisection",
        iterations: opts.max_iter,
        residual: hi - lo,
    })
}

/// CSV table of the policy: one row per `(a, z)` node with savings, value and,
/// when given, stationary mass.
pub fn policy_table_csv(policy: &RationalPolicy, dist: Option<&WealthDistribution>) -> String {
    use crate::export::fmt_f64;
    let mut out = String::from("a,z,savings,value,mass\n");
    for iz in 0..policy.chain.n_states() {
        for (ia, &a) in policy.grid.points().iter().enumerate() {
            let mass = dist.map_or(String::new(), |d| fmt_f64(d.at(ia, iz)));
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                fmt_f64(a),
                fmt_f64(policy.chain.z(iz)),
                fmt_f64(policy.savings_at(ia, iz)),
                fmt_f64(policy.value_at(ia, iz)),
                mass
            ));
        }
    }
    out
}
