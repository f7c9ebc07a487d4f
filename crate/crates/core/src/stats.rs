//! Inequality, hand-to-mouth dynamics, MPCs, consumption sensitivity,
//! intergenerational mobility, welfare and policy diagnostics.

use std::fmt::Write as _;

use crate::economy::{Preferences, Prices};
use crate::error::{Error, Result};
use crate::export::fmt_f64;
use crate::numeric::ols;
use crate::population::{PanelDataset, PanelRow, SnapshotRow};
use crate::rational::{RationalPolicy, WealthDistribution};

/// Gini coefficient `sum_ij |x_i - x_j| / (2 n^2 mean)`, computed on sorted data.
pub fn gini(values: &[f64]) -> Result<f64> {
    check_nonnegative(values)?;
    let mut x = values.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let total: f64 = x.iter().sum();
    if !(total > 0.0) {
        return Err(Error::domain("gini needs at least one positive value"));
    }
    let weighted: f64 = x
        .iter()
        .enumerate()
        .map(|(i, v)| (2.0 * (i as f64 + 1.0) - n - 1.0) * v)
        .sum();
    Ok(weighted / (n * total))
}

/// Gini of a discrete distribution with probability `weights` on `values`.
pub fn gini_weighted(values: &[f64], weights: &[f64]) -> Result<f64> {
    check_nonnegative(values)?;
    check_weights(values, weights)?;
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let total_w: f64 = weights.iter().sum();
    let mean: f64 = values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total_w;
    if !(mean > 0.0) {
        return Err(Error::domain("gini needs positive mean"));
    }
    let mut below = 0.0;
    let mut acc = 0.0;
    for &i in &idx {
        let w = weights[i] / total_w;
        let above = 1.0 - below - w;
        acc += w * values[i] * (below - above);
        below += w;
    }
    Ok(acc / mean)
}

fn check_nonnegative(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::domain("empty input"));
    }
    if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::domain("values must be finite and nonnegative"));
    }
    Ok(())
}

fn check_weights(values: &[f64], weights: &[f64]) -> Result<()> {
    if weights.len() != values.len() || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::domain("weights must be nonnegative and match the values"));
    }
    if !(weights.iter().sum::<f64>() > 0.0) {
        return Err(Error::domain("weights sum to zero"));
    }
    Ok(())
}

/// Share of the total held by the top `q` of holders, for each `q` in `fractions`.
/// The unit straddling the boundary counts in proportion.
pub fn top_shares(values: &[f64], fractions: &[f64]) -> Result<Vec<f64>> {
    let w = vec![1.0; values.len()];
    top_shares_weighted(values, &w, fractions)
}

pub fn top_shares_weighted(values: &[f64], weights: &[f64], fractions: &[f64]) -> Result<Vec<f64>> {
    check_nonnegative(values)?;
    check_weights(values, weights)?;
    let total_w: f64 = weights.iter().sum();
    let total: f64 = values.iter().zip(weights).map(|(v, w)| v * w).sum();
    if !(total > 0.0) {
        return Err(Error::domain("top shares need a positive total"));
    }
    let mut idx: Vec<usize> = (0..values.len()).collect();
    // stable: ties keep input order
    idx.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    fractions
        .iter()
        .map(|&q| {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::domain(format!("fraction {q} outside [0, 1]")));
            }
            let mut room = q * total_w;
            let mut held = 0.0;
            for &i in &idx {
                if room <= 0.0 {
                    break;
                }
                let take = weights[i].min(room);
                held += take * values[i];
                room -= take;
            }
            Ok(held / total)
        })
        .collect()
}

/// Hand-to-mouth: wealth below two months of labor income, `a < w z / 6`.
#[inline]
pub fn h2m_flag(a: f64, z: f64, prices: Prices) -> bool {
    a < prices.w * z / 6.0
}

/// Which columns of a panel to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    /// Realized choices of the simulated agents.
    Learned,
    /// The rational counterfactual under the same shocks.
    Rational,
}

impl View {
    #[inline]
    pub fn wealth(self, r: &PanelRow) -> f64 {
        match self {
            View::Learned => r.a,
            View::Rational => r.a_re_counterfactual,
        }
    }

    #[inline]
    pub fn consumption(self, r: &PanelRow) -> f64 {
        match self {
            View::Learned => r.consumption,
            View::Rational => r.consumption_re_counterfactual,
        }
    }

    #[inline]
    pub fn mpc(self, r: &PanelRow) -> f64 {
        match self {
            View::Learned => r.mpc,
            View::Rational => r.mpc_re_counterfactual,
        }
    }

    #[inline]
    pub fn income(self, r: &PanelRow, prices: Prices) -> f64 {
        prices.income(self.wealth(r), r.z)
    }
}

fn adult_rows(panel: &PanelDataset) -> impl Iterator<Item = &PanelRow> {
    let ch = panel.childhood;
    panel.rows.iter().filter(move |r| r.age >= ch)
}

fn nonempty(n: usize, what: &str) -> Result<()> {
    if n == 0 {
        Err(Error::domain(format!("no adult records for {what}")))
    } else {
        Ok(())
    }
}

/// Pooled adult wealth.
pub fn adult_wealth(panel: &PanelDataset, view: View) -> Vec<f64> {
    adult_rows(panel).map(|r| view.wealth(r)).collect()
}

pub fn h2m_frequency(panel: &PanelDataset, view: View, prices: Prices) -> Result<f64> {
    let (mut n, mut k) = (0usize, 0usize);
    for r in adult_rows(panel) {
        n += 1;
        k += h2m_flag(view.wealth(r), r.z, prices) as usize;
    }
    nonempty(n, "hand-to-mouth frequency")?;
    Ok(k as f64 / n as f64)
}

/// `P(h2m at t + lag | h2m at t)` over adult records with both periods observed.
pub fn h2m_persistence(panel: &PanelDataset, view: View, prices: Prices, lag: usize) -> Result<f64> {
    let (mut base, mut stay) = (0usize, 0usize);
    for rows in panel.agents() {
        for t in panel.childhood..rows.len().saturating_sub(lag) {
            if h2m_flag(view.wealth(&rows[t]), rows[t].z, prices) {
                base += 1;
                let later = &rows[t + lag];
                stay += h2m_flag(view.wealth(later), later.z, prices) as usize;
            }
        }
    }
    if base == 0 {
        return Err(Error::domain("no hand-to-mouth records to condition on"));
    }
    Ok(stay as f64 / base as f64)
}

/// Mean MPC over adult records.
pub fn average_mpc(panel: &PanelDataset, view: View) -> Result<f64> {
    let v: Vec<f64> = adult_rows(panel).map(|r| view.mpc(r)).filter(|m| m.is_finite()).collect();
    nonempty(v.len(), "MPC")?;
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

/// MPC `1 - pi'(a) / (1 + r)` of the rational policy at every grid node,
/// averaged with the stationary masses.
pub fn rational_average_mpc(policy: &RationalPolicy, dist: &WealthDistribution, h: f64) -> f64 {
    let pts = policy.grid().points();
    let r = policy.prices().r;
    let mut acc = 0.0;
    for iz in 0..dist.n_states() {
        for (ia, &a) in pts.iter().enumerate() {
            let m = dist.at(ia, iz);
            if m > 0.0 {
                let mpc = crate::agent::mpc_from(|s| policy.interpolate(s, iz), a, h, pts[0], r);
                acc += m * mpc;
            }
        }
    }
    acc / dist.total()
}

/// `(log y_t, Delta log c_{t+1}, a_t)` for consecutive adult periods.
fn sensitivity_pairs(panel: &PanelDataset, view: View, prices: Prices) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::new();
    for rows in panel.agents() {
        for t in panel.childhood..rows.len().saturating_sub(1) {
            let (now, next) = (&rows[t], &rows[t + 1]);
            let (c0, c1) = (view.consumption(now), view.consumption(next));
            let y = view.income(now, prices);
            if c0 > 0.0 && c1 > 0.0 && y > 0.0 {
                out.push((y.ln(), c1.ln() - c0.ln(), view.wealth(now)));
            }
        }
    }
    out
}

/// Elasticity `-beta / (1 - rho)` from the OLS slope `beta` of `dlog c` on `log y`.
pub fn elasticity_from_pairs(log_y: &[f64], dlog_c: &[f64], rho: f64) -> Result<f64> {
    let (_, slope) = ols(log_y, dlog_c).ok_or_else(|| Error::domain("income regressor has no variance"))?;
    Ok(-slope / (1.0 - rho))
}

pub fn sensitivity_elasticity(panel: &PanelDataset, view: View, prices: Prices, rho: f64) -> Result<f64> {
    let pairs = sensitivity_pairs(panel, view, prices);
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.iter().map(|p| (p.0, p.1)).unzip();
    elasticity_from_pairs(&x, &y, rho)
}

/// Decile boundaries of `values` (nine interior cut points).
pub fn decile_cuts(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    (1..10)
        .map(|k| {
            if v.is_empty() {
                f64::NAN
            } else {
                v[(k * v.len() / 10).min(v.len() - 1)]
            }
        })
        .collect()
}

fn decile_of(cuts: &[f64], x: f64) -> usize {
    cuts.partition_point(|&c| c <= x)
}

/// Elasticity within each wealth decile of the pooled adult panel:
/// `(decile, lower wealth, upper wealth, elasticity)`; NaN where undefined.
pub fn elasticity_by_wealth(panel: &PanelDataset, view: View, prices: Prices, rho: f64) -> Vec<(usize, f64, f64, f64)> {
    let pairs = sensitivity_pairs(panel, view, prices);
    let cuts = decile_cuts(&pairs.iter().map(|p| p.2).collect::<Vec<_>>());
    by_decile(&cuts, pairs.len(), |d| {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs
            .iter()
            .filter(|p| decile_of(&cuts, p.2) == d)
            .map(|p| (p.0, p.1))
            .unzip();
        elasticity_from_pairs(&x, &y, rho).unwrap_or(f64::NAN)
    })
}

/// Mean MPC within each wealth decile of the pooled adult panel.
pub fn mpc_by_wealth(panel: &PanelDataset, view: View) -> Vec<(usize, f64, f64, f64)> {
    let obs: Vec<(f64, f64)> = adult_rows(panel).map(|r| (view.wealth(r), view.mpc(r))).collect();
    let cuts = decile_cuts(&obs.iter().map(|o| o.0).collect::<Vec<_>>());
    by_decile(&cuts, obs.len(), |d| {
        let v: Vec<f64> = obs
            .iter()
            .filter(|o| decile_of(&cuts, o.0) == d && o.1.is_finite())
            .map(|o| o.1)
            .collect();
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    })
}

fn by_decile(cuts: &[f64], n: usize, mut f: impl FnMut(usize) -> f64) -> Vec<(usize, f64, f64, f64)> {
    if n == 0 {
        return Vec::new();
    }
    (0..10)
        .map(|d| {
            let lo = if d == 0 { f64::NEG_INFINITY } else { cuts[d - 1] };
            let hi = if d == 9 { f64::INFINITY } else { cuts[d] };
            (d, lo, hi, f(d))
        })
        .collect()
}

/// Percentile ranks in (0, 1]: average rank of ties divided by `n`.
pub fn percentile_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        // positions i..=j share the average 1-based rank
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg / n as f64;
        }
        i = j + 1;
    }
    ranks
}

fn check_pairs(parent: &[f64], child: &[f64]) -> Result<()> {
    if parent.len() != child.len() || parent.len() < 2 {
        return Err(Error::domain("need at least two paired observations"));
    }
    Ok(())
}

/// OLS slope of child percentile rank on parent percentile rank.
pub fn rank_rank_slope(parent: &[f64], child: &[f64]) -> Result<f64> {
    check_pairs(parent, child)?;
    let (rp, rc) = (percentile_ranks(parent), percentile_ranks(child));
    ols(&rp, &rc)
        .map(|(_, b)| b)
        .ok_or_else(|| Error::domain("parent ranks are constant"))
}

/// Quantile group in `0..n_groups` from the percentile rank.
pub fn quantile_groups(values: &[f64], n_groups: usize) -> Vec<usize> {
    let n = values.len() as f64;
    percentile_ranks(values)
        .iter()
        .map(|&p| (((p * n - 0.5) / n * n_groups as f64).floor() as usize).min(n_groups - 1))
        .collect()
}

/// Row-normalized quantile transition matrix.
pub fn transition_matrix(parent: &[f64], child: &[f64], n_groups: usize) -> Result<Vec<Vec<f64>>> {
    check_pairs(parent, child)?;
    if n_groups < 2 {
        return Err(Error::domain("need at least two groups"));
    }
    let (gp, gc) = (quantile_groups(parent, n_groups), quantile_groups(child, n_groups));
    let mut counts = vec![vec![0.0; n_groups]; n_groups];
    for (&i, &j) in gp.iter().zip(&gc) {
        counts[i][j] += 1.0;
    }
    for (i, row) in counts.iter_mut().enumerate() {
        let total: f64 = row.iter().sum();
        if total == 0.0 {
            return Err(Error::domain(format!("parent group {i} of {n_groups} is empty")));
        }
        row.iter_mut().for_each(|c| *c /= total);
    }
    Ok(counts)
}

/// `(n - trace) / (n - 1)` of the quantile transition matrix.
pub fn shorrocks_index(parent: &[f64], child: &[f64], n_groups: usize) -> Result<f64> {
    let m = transition_matrix(parent, child, n_groups)?;
    let trace: f64 = (0..n_groups).map(|i| m[i][i]).sum();
    Ok((n_groups as f64 - trace) / (n_groups as f64 - 1.0))
}

/// OLS slope of `log child` on `log parent`. With `exclude_zero`, pairs with a
/// nonpositive member are dropped; otherwise they are an error.
pub fn intergenerational_elasticity(parent: &[f64], child: &[f64], exclude_zero: bool) -> Result<f64> {
    if parent.len() != child.len() {
        return Err(Error::domain("paired vectors differ in length"));
    }
    let mut x = Vec::with_capacity(parent.len());
    let mut y = Vec::with_capacity(parent.len());
    for (&p, &c) in parent.iter().zip(child) {
        if p > 0.0 && c > 0.0 {
            x.push(p.ln());
            y.push(c.ln());
        } else if !exclude_zero {
            return Err(Error::domain("nonpositive value in a log regression"));
        }
    }
    if x.len() < 2 {
        return Err(Error::domain("fewer than two positive pairs"));
    }
    ols(&x, &y)
        .map(|(_, b)| b)
        .ok_or_else(|| Error::domain("parent values are constant"))
}

/// Compensating and equivalent variation from expected discounted utilities.
///
/// `(1 + CV)^(1 - gamma) = U_re / U_nn` and `(1 - EV)^(1 - gamma) = U_nn / U_re`.
pub fn welfare_variation(u_nn: f64, u_re: f64, gamma: f64) -> Result<(f64, f64)> {
    if !(u_nn.is_finite() && u_re.is_finite()) {
        return Err(Error::NonFinite("discounted utility".into()));
    }
    if gamma > 1.0 && (u_nn >= 0.0 || u_re >= 0.0) {
        return Err(Error::NonFinite("CRRA utility with gamma > 1 must be negative".into()));
    }
    if gamma < 1.0 && (u_nn <= 0.0 || u_re <= 0.0) {
        return Err(Error::NonFinite("CRRA utility with gamma < 1 must be positive".into()));
    }
    let e = 1.0 / (1.0 - gamma);
    Ok(((u_re / u_nn).powf(e) - 1.0, 1.0 - (u_nn / u_re).powf(e)))
}

/// Mean over agents of `sum_{t >= from_age} beta^t u(c_t)` for the learned and
/// rational consumption paths.
pub fn discounted_utilities(panel: &PanelDataset, prefs: Preferences, from_age: usize) -> Result<(f64, f64)> {
    let mut totals = (0.0, 0.0);
    let n = panel.n_agents();
    nonempty(n, "welfare")?;
    for rows in panel.agents() {
        for r in rows.iter().filter(|r| r.age >= from_age) {
            let disc = prefs.beta.powi(r.age as i32);
            totals.0 += disc * prefs.utility(r.consumption)?;
            totals.1 += disc * prefs.utility(r.consumption_re_counterfactual)?;
        }
    }
    Ok((totals.0 / n as f64, totals.1 / n as f64))
}

/// Ages used to pair parent and child outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MobilityAges {
    /// Parent income is read at this age (the last year before adulthood).
    pub income_parent: usize,
    pub income_child: usize,
    /// Inherited wealth is the wealth held at this age.
    pub wealth_parent: usize,
    pub wealth_child: usize,
}

impl Default for MobilityAges {
    /// Income 10 years apart (19 -> 29), wealth 18 years apart (20 -> 38).
    fn default() -> Self {
        MobilityAges {
            income_parent: 19,
            income_child: 29,
            wealth_parent: 20,
            wealth_child: 38,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityPairs {
    pub parent_income: Vec<f64>,
    pub child_income: Vec<f64>,
    pub parent_wealth: Vec<f64>,
    pub child_wealth: Vec<f64>,
}

pub fn mobility_pairs(panel: &PanelDataset, view: View, prices: Prices, ages: MobilityAges) -> Result<MobilityPairs> {
    let max_age = ages.income_child.max(ages.wealth_child).max(ages.income_parent).max(ages.wealth_parent);
    if max_age >= panel.life_t {
        return Err(Error::config(format!(
            "mobility ages reach {max_age} but lives last {} periods",
            panel.life_t
        )));
    }
    let mut out = MobilityPairs {
        parent_income: Vec::new(),
        child_income: Vec::new(),
        parent_wealth: Vec::new(),
        child_wealth: Vec::new(),
    };
    for rows in panel.agents() {
        out.parent_income.push(view.income(&rows[ages.income_parent], prices));
        out.child_income.push(view.income(&rows[ages.income_child], prices));
        out.parent_wealth.push(view.wealth(&rows[ages.wealth_parent]));
        out.child_wealth.push(view.wealth(&rows[ages.wealth_child]));
    }
    Ok(out)
}

/// Mean child percentile rank within `n_bins` equal-mass bins of parent rank.
pub fn binned_rank_means(parent: &[f64], child: &[f64], n_bins: usize) -> Vec<(usize, f64)> {
    let (rp, rc) = (percentile_ranks(parent), percentile_ranks(child));
    binned_means(&rp, &rc, n_bins)
}

fn binned_means(rank: &[f64], y: &[f64], n_bins: usize) -> Vec<(usize, f64)> {
    let mut sums = vec![(0.0, 0usize); n_bins];
    let n = rank.len() as f64;
    for (&p, &v) in rank.iter().zip(y) {
        let b = (((p * n - 0.5) / n * n_bins as f64).floor() as usize).min(n_bins - 1);
        sums[b].0 += v;
        sums[b].1 += 1;
    }
    sums.iter()
        .enumerate()
        .map(|(b, &(s, c))| (b, if c == 0 { f64::NAN } else { s / c as f64 }))
        .collect()
}

/// Share of agents in each parental-wealth bin whose last-period wealth is
/// above `extreme` and share hand-to-mouth in the last period.
pub fn extreme_outcomes_by_parent_rank(
    panel: &PanelDataset,
    view: View,
    prices: Prices,
    parent_age: usize,
    extreme: f64,
    n_bins: usize,
) -> Vec<(usize, f64, f64)> {
    let last = panel.life_t - 1;
    let parent: Vec<f64> = panel.agents().map(|r| view.wealth(&r[parent_age])).collect();
    let rich: Vec<f64> = panel
        .agents()
        .map(|r| (view.wealth(&r[last]) > extreme) as u8 as f64)
        .collect();
    let h2m: Vec<f64> = panel
        .agents()
        .map(|r| h2m_flag(view.wealth(&r[last]), r[last].z, prices) as u8 as f64)
        .collect();
    let rp = percentile_ranks(&parent);
    binned_means(&rp, &rich, n_bins)
        .into_iter()
        .zip(binned_means(&rp, &h2m, n_bins))
        .map(|((b, x), (_, y))| (b, x, y))
        .collect()
}

/// Wealth at quantile `q` of a discrete distribution.
pub fn weighted_quantile(values: &[f64], weights: &[f64], q: f64) -> f64 {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let total: f64 = weights.iter().sum();
    let mut cum = 0.0;
    for &i in &idx {
        cum += weights[i];
        if cum >= q * total {
            return values[i];
        }
    }
    idx.last().map_or(f64::NAN, |&i| values[i])
}

/// Squared deviation of snapshot policies from the rational policy, averaged
/// within groups: `(group, sweep, x, mean squared deviation)`.
pub fn policy_sq_deviation(
    rows: &[SnapshotRow],
    age: usize,
    re: &RationalPolicy,
    group_of: impl Fn(u64) -> Option<usize>,
    n_groups: usize,
) -> Result<Vec<(usize, char, f64, f64)>> {
    let selected: Vec<&SnapshotRow> = rows.iter().filter(|r| r.age == age).collect();
    if selected.is_empty() {
        return Err(Error::config(format!("no policy snapshots at age {age}")));
    }
    let mut acc: std::collections::BTreeMap<(usize, char, u64), (f64, usize, f64)> = Default::default();
    for r in selected {
        let Some(g) = group_of(r.agent_id) else { continue };
        if g >= n_groups {
            continue;
        }
        let x = if r.sweep == 'a' { r.a_grid } else { r.z_grid };
        let d = r.savings - re.interpolate(r.a_grid, r.z_index);
        let e = acc.entry((g, r.sweep, x.to_bits())).or_insert((0.0, 0, x));
        e.0 += d * d;
        e.1 += 1;
    }
    let mut out: Vec<(usize, char, f64, f64)> = acc
        .into_iter()
        .map(|((g, s, _), (sum, n, x))| (g, s, x, sum / n as f64))
        .collect();
    out.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)).then(a.2.total_cmp(&b.2)));
    Ok(out)
}

/// Saving rate `(a' - a) / (r a + w z)`; `None` without income.
pub fn saving_rate(a: f64, next: f64, z: f64, prices: Prices) -> Option<f64> {
    let y = prices.income(a, z);
    (y > 0.0).then(|| (next - a) / y)
}

/// Group-mean saving rate on each sweep point plus the rational rate:
/// `(sweep, a, z, mean learned rate, rational rate)`.
pub fn policy_profile(rows: &[SnapshotRow], age: usize, re: &RationalPolicy) -> Vec<(char, f64, f64, f64, f64)> {
    let prices = re.prices();
    let mut acc: std::collections::BTreeMap<(char, u64, usize), (f64, usize, f64, f64)> = Default::default();
    for r in rows.iter().filter(|r| r.age == age) {
        let e = acc
            .entry((r.sweep, r.a_grid.to_bits(), r.z_index))
            .or_insert((0.0, 0, r.a_grid, r.z_grid));
        if r.saving_rate.is_finite() {
            e.0 += r.saving_rate;
            e.1 += 1;
        }
    }
    let mut out: Vec<(char, f64, f64, f64, f64)> = acc
        .into_iter()
        .map(|((s, _, iz), (sum, n, a, z))| {
            let re_rate = saving_rate(a, re.interpolate(a, iz), z, prices).unwrap_or(f64::NAN);
            (s, a, z, if n == 0 { f64::NAN } else { sum / n as f64 }, re_rate)
        })
        .collect();
    out.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)).then(x.2.total_cmp(&y.2)));
    out
}

/// Quantiles (10, 25, 50, 75, 90%) of snapshot savings per productivity state
/// on the productivity sweep.
pub fn policy_distribution_by_z(rows: &[SnapshotRow], age: usize) -> Vec<(f64, [f64; 5])> {
    let mut by_z: std::collections::BTreeMap<usize, (f64, Vec<f64>)> = Default::default();
    for r in rows.iter().filter(|r| r.age == age && r.sweep == 'z') {
        by_z.entry(r.z_index).or_insert((r.z_grid, Vec::new())).1.push(r.savings);
    }
    by_z.into_values()
        .map(|(z, mut v)| {
            v.sort_by(f64::total_cmp);
            let q = |p: f64| v[((p * (v.len() - 1) as f64).round() as usize).min(v.len() - 1)];
            (z, [q(0.1), q(0.25), q(0.5), q(0.75), q(0.9)])
        })
        .collect()
}

/// Named results with metadata, serializable as aligned text or CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StatReport {
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    /// `(statistic, value per column)`; NaN marks a value that does not apply.
    pub rows: Vec<(String, Vec<f64>)>,
}

impl StatReport {
    pub fn new(columns: Vec<String>) -> Self {
        StatReport {
            columns,
            ..Default::default()
        }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.to_string(), value.to_string()));
    }

    pub fn push(&mut self, name: &str, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.columns.len());
        self.rows.push((name.to_string(), values));
    }

    pub fn get(&self, name: &str, column: &str) -> Option<f64> {
        let c = self.columns.iter().position(|x| x == column)?;
        self.rows.iter().find(|(n, _)| n == name).map(|(_, v)| v[c])
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k} = {v}");
        }
        let width = self.rows.iter().map(|(n, _)| n.len()).max().unwrap_or(9).max(9);
        let _ = write!(out, "{:<width$}", "statistic");
        for c in &self.columns {
            let _ = write!(out, "  {c:>12}");
        }
        out.push('\n');
        for (name, values) in &self.rows {
            let _ = write!(out, "{name:<width$}");
            for v in values {
                if v.is_nan() {
                    let _ = write!(out, "  {:>12}", "-");
                } else {
                    let _ = write!(out, "  {v:>12.4}");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("statistic");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (name, values) in &self.rows {
            out.push_str(name);
            for v in values {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
            out.push('\n');
        }
        out
    }
}
