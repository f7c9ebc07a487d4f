mod common;

use nn_economy::economy::{labor_supply, Technology};
use nn_economy::rational::{capital_gap, find_equilibrium, AssetGrid};
use nn_economy::stats::saving_rate;

/// Euler residual at a node recomputed from the public policy table.
fn node_residual(ia: usize, iz: usize) -> f64 {
    let b = common::baseline();
    let pol = &b.eq.policy;
    let pr = pol.prices();
    let next = pol.savings_at(ia, iz);
    let c = pr.cash_on_hand(b.grid.points()[ia], b.chain.z(iz)) - next;
    let mut expected = 0.0;
    for jz in 0..b.chain.n_states() {
        let c_next = pr.cash_on_hand(next, b.chain.z(jz)) - pol.interpolate(next, jz);
        expected += b.chain.prob(iz, jz) * c_next.powf(-b.prefs.gamma);
    }
    b.prefs.beta * (1.0 + pr.r) * expected / c.powf(-b.prefs.gamma) - 1.0
}

#[test]
fn euler_equation_holds_at_interior_nodes() {
    let b = common::baseline();
    let pol = &b.eq.policy;
    let top = b.grid.max();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for iz in 0..b.chain.n_states() {
        for ia in 0..b.grid.len() {
            let next = pol.savings_at(ia, iz);
            let caps_tomorrow = (0..b.chain.n_states())
                .any(|jz| b.chain.prob(iz, jz) > 0.0 && pol.interpolate(next, jz) >= top - 1e-6);
            if next <= 1e-10 || next >= top - 1e-6 || caps_tomorrow {
                continue;
            }
            let mine = node_residual(ia, iz);
            let theirs = pol.euler_residual(ia, iz).unwrap();
            assert!((mine - theirs).abs() < 1e-12);
            worst = worst.max(mine.abs());
            checked += 1;
        }
    }
    assert!(checked > 1000);
    assert!(worst < 1e-2, "worst interior residual {worst}");
}

#[test]
fn value_function_is_increasing_and_concave() {
    let b = common::baseline();
    let pts = b.grid.points();
    for iz in 0..b.chain.n_states() {
        let v: Vec<f64> = (0..pts.len()).map(|ia| b.eq.policy.value_at(ia, iz)).collect();
        let slopes: Vec<f64> = (1..pts.len()).map(|i| (v[i] - v[i - 1]) / (pts[i] - pts[i - 1])).collect();
        assert!(slopes.iter().all(|&s| s > 0.0));
        for w in slopes.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-6) + 1e-9, "state {iz}: {} then {}", w[0], w[1]);
        }
    }
}

#[test]
fn capital_market_clears() {
    let b = common::baseline();
    let eq = &b.eq;
    let supply = eq.distribution.capital(&b.grid);
    assert!((supply / eq.capital_demand - 1.0).abs() < 0.01);
    assert!((eq.capital_supply - supply).abs() < 1e-12);
    assert!((eq.distribution.total() - 1.0).abs() < 1e-10);
    let k = Technology::baseline().capital_demand(eq.prices.r, labor_supply(&b.chain).unwrap()).unwrap();
    assert!((k - eq.capital_demand).abs() < 1e-10);
}

#[test]
fn equilibrium_rate_near_reference() {
    let r = common::baseline().eq.prices.r;
    assert!((r - 0.0329).abs() <= 0.0015, "r = {r}");
}

#[test]
fn excess_demand_falls_with_the_rate() {
    let b = common::baseline();
    let probes = [0.0, 0.01, 0.02, 0.03, 0.035];
    let gaps: Vec<f64> = probes
        .iter()
        .map(|&r| capital_gap(r, Technology::baseline(), b.prefs, &b.chain, &b.grid).unwrap())
        .collect();
    for w in gaps.windows(2) {
        assert!(w[1] < w[0], "{gaps:?}");
    }
    assert!(gaps[0] > 0.0 && gaps[4] < 0.0);
}

#[test]
fn interpolated_savings_are_monotone_in_wealth() {
    let b = common::baseline();
    for iz in 0..b.chain.n_states() {
        let xs: Vec<f64> = (0..1000).map(|i| b.grid.max() * i as f64 / 999.0).collect();
        let ys: Vec<f64> = xs.iter().map(|&a| b.eq.policy.interpolate(a, iz)).collect();
        assert!(ys.windows(2).all(|w| w[1] >= w[0] - 1e-12), "state {iz}");
    }
}

#[test]
fn halving_the_grid_barely_moves_the_rate() {
    let b = common::baseline();
    let coarse = AssetGrid::squared(150, 60.0).unwrap();
    let eq = find_equilibrium(Technology::baseline(), b.prefs, &b.chain, &coarse).unwrap();
    let dr = (eq.prices.r - b.eq.prices.r).abs();
    assert!(dr < 5e-4, "coarse {} vs fine {}", eq.prices.r, b.eq.prices.r);
}

#[test]
fn saving_rate_falls_with_wealth_at_mean_productivity() {
    let b = common::baseline();
    let pz = b.chain.stationary_distribution().unwrap();
    let mean = b.chain.mean_z(&pz);
    let iz = (0..b.chain.n_states())
        .min_by(|&i, &j| (b.chain.z(i) - mean).abs().total_cmp(&(b.chain.z(j) - mean).abs()))
        .unwrap();
    let rates: Vec<f64> = (2..=30)
        .map(|a| {
            let a = a as f64;
            saving_rate(a, b.eq.policy.interpolate(a, iz), b.chain.z(iz), b.prices()).unwrap()
        })
        .collect();
    for w in rates.windows(2) {
        assert!(w[1] < w[0], "{rates:?}");
    }
}
