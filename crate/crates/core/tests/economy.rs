use nn_economy::economy::{Preferences, Technology};
use proptest::prelude::*;

#[test]
fn utility_slope_matches_central_difference() {
    let p = Preferences::baseline();
    let h = 1e-5;
    let fd = (p.utility(1.7 + h).unwrap() - p.utility(1.7 - h).unwrap()) / (2.0 * h);
    let mu = p.marginal_utility(1.7).unwrap();
    assert!((fd / mu - 1.0).abs() < 1e-6);
}

#[test]
fn capital_and_rate_invert_each_other() {
    let tech = Technology::baseline();
    let labor = 1.07;
    let k = tech.capital_demand(0.0329, labor).unwrap();
    let prices = tech.prices_from_capital(k, labor).unwrap();
    assert!((prices.r - 0.0329).abs() < 1e-10);
}

proptest! {
    #[test]
    fn crra_is_increasing_and_concave(c in 0.01f64..100.0, d in 0.001f64..10.0, gamma in 0.2f64..5.0) {
        let p = Preferences::new(0.96, gamma).unwrap();
        prop_assert!(p.utility(c + d).unwrap() > p.utility(c).unwrap());
        prop_assert!(p.marginal_utility(c + d).unwrap() < p.marginal_utility(c).unwrap());
        prop_assert!(p.marginal_utility(c).unwrap() > 0.0);
    }

    #[test]
    fn factor_payments_exhaust_output(k in 0.1f64..50.0, l in 0.1f64..5.0) {
        let tech = Technology::baseline();
        let pr = tech.prices_from_capital(k, l).unwrap();
        let y = tech.output(k, l);
        prop_assert!(((pr.r + tech.delta) * k + pr.w * l - y).abs() < 1e-10 * y);
    }
}
