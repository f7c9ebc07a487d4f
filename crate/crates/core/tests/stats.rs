mod common;

use nn_economy::agent::{mpc_from, stream_rng};
use nn_economy::economy::{Preferences, Prices};
use nn_economy::population::{PanelDataset, PanelRow, SnapshotRow};
use nn_economy::stats::{self, View};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn row(agent_id: u64, age: usize, a: f64, z: f64, consumption: f64) -> PanelRow {
    PanelRow {
        agent_id,
        generation: 1,
        period: age,
        age,
        a,
        z,
        action: 0.0,
        consumption,
        euler_err: f64::NAN,
        clip_flag: 0,
        a_re_counterfactual: a,
        z_index: 0,
        mpc: 0.5,
        action_re_counterfactual: 0.0,
        consumption_re_counterfactual: consumption,
        mpc_re_counterfactual: 0.5,
    }
}

#[test]
fn hand_computed_cases() {
    let fails = common::stats_oracle_failures();
    assert!(fails.is_empty(), "{fails:?}");
}

#[test]
fn consumption_tracking_income_has_unit_elasticity() {
    let prices = Prices { r: 0.03, w: 1.0 };
    let rho = 0.6;
    let shock = Normal::new(0.0, 0.3).unwrap();
    let mut rng = stream_rng(61, 0);
    let (life_t, childhood) = (100, 20);
    let n_agents = 1_000_000 / (life_t - childhood) + 1;
    let sd = 0.3 / (1.0f64 - rho * rho).sqrt();
    let mut rows = Vec::with_capacity(n_agents * life_t);
    for id in 0..n_agents as u64 {
        let mut x: f64 = Normal::new(0.0, sd).unwrap().sample(&mut rng);
        for age in 0..life_t {
            let y = x.exp();
            rows.push(row(id, age, 0.0, y, y));
            x = rho * x + shock.sample(&mut rng);
        }
    }
    let panel = PanelDataset { life_t, childhood, rows };
    let e = stats::sensitivity_elasticity(&panel, View::Learned, prices, rho).unwrap();
    assert!((e - 1.0).abs() < 0.02, "elasticity {e}");

    let flat: Vec<PanelRow> = panel.rows.iter().map(|r| PanelRow { consumption: 1.0, ..*r }).collect();
    let flat = PanelDataset { rows: flat, ..panel };
    assert_eq!(stats::sensitivity_elasticity(&flat, View::Learned, prices, rho).unwrap(), 0.0);
}

#[test]
fn square_root_transmission_has_half_elasticity() {
    let mut rng = stream_rng(62, 0);
    let noise = Normal::new(0.0, 0.2).unwrap();
    let parent: Vec<f64> = (0..100_000).map(|_| rng.random_range(0.5..20.0)).collect();
    let child: Vec<f64> = parent.iter().map(|p: &f64| p.sqrt() * f64::exp(noise.sample(&mut rng))).collect();
    let ige = stats::intergenerational_elasticity(&parent, &child, false).unwrap();
    assert!((ige - 0.5).abs() < 0.01, "ige {ige}");

    let mut with_zero = parent.clone();
    with_zero[0] = 0.0;
    assert!(stats::intergenerational_elasticity(&with_zero, &child, false).is_err());
    assert!(stats::intergenerational_elasticity(&with_zero, &child, true).is_ok());
    assert!((stats::intergenerational_elasticity(&parent, &parent, false).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn independent_ranks_have_flat_slope() {
    let mut rng = stream_rng(63, 0);
    let n = 40_000;
    let p: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let c: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let s = stats::rank_rank_slope(&p, &c).unwrap();
    assert!(s.abs() < 3.0 / (n as f64).sqrt(), "slope {s}");
    assert!((stats::rank_rank_slope(&p, &p).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn uniform_transitions_give_unit_shorrocks() {
    let parent: Vec<f64> = (0..25).map(f64::from).collect();
    let child: Vec<f64> = (0..25).map(|i| ((i % 5) * 5 + i / 5) as f64).collect();
    let m = stats::transition_matrix(&parent, &child, 5).unwrap();
    assert!(m.iter().flatten().all(|&x| (x - 0.2).abs() < 1e-12));
    assert_eq!(stats::shorrocks_index(&parent, &child, 5).unwrap(), 1.0);
}

#[test]
fn proportional_consumption_cut_costs_ten_percent() {
    let prefs = Preferences::baseline();
    let rows: Vec<PanelRow> = (0..100)
        .map(|age| {
            let c = 1.0 + 0.01 * age as f64;
            PanelRow { consumption: c / 1.1, ..row(0, age, 1.0, 1.0, c) }
        })
        .collect();
    let panel = PanelDataset { life_t: 100, childhood: 20, rows };
    let (u_nn, u_re) = stats::discounted_utilities(&panel, prefs, 20).unwrap();
    let (cv, ev) = stats::welfare_variation(u_nn, u_re, prefs.gamma).unwrap();
    assert!((cv - 0.1).abs() < 1e-12, "cv {cv}");
    assert!((ev - (1.0 - 1.0 / 1.1)).abs() < 1e-12, "ev {ev}");
    assert!(stats::welfare_variation(1.0, -1.0, 2.0).is_err());
}

#[test]
fn inertial_rules_have_closed_form_diagnostics() {
    let b = common::baseline();
    let prices = b.prices();
    let m = mpc_from(|a| a, 5.0, 1e-3, 0.0, prices.r);
    assert!((m - prices.r / (1.0 + prices.r)).abs() < 1e-12);
    assert!((mpc_from(|_| 0.0, 5.0, 1e-3, 0.0, prices.r) - 1.0).abs() < 1e-12);
    assert_eq!(stats::saving_rate(4.0, 4.0, 1.0, prices), Some(0.0));
    let p2 = Prices { r: 0.0, w: 2.0 };
    assert_eq!(stats::saving_rate(3.0, 4.0, 1.0, p2), Some(0.5));

    let mut snaps = Vec::new();
    for id in 0..8u64 {
        for k in 0..=30 {
            let a = k as f64;
            snaps.push(SnapshotRow { agent_id: id, age: 20, a_grid: a, z_grid: b.chain.z(10), savings: a, saving_rate: 0.0, sweep: 'a', z_index: 10 });
        }
        for iz in 0..b.chain.n_states() {
            snaps.push(SnapshotRow { agent_id: id, age: 20, a_grid: 4.0, z_grid: b.chain.z(iz), savings: 4.0, saving_rate: 0.0, sweep: 'z', z_index: iz });
        }
    }
    let dev = stats::policy_sq_deviation(&snaps, 20, &b.eq.policy, |id| Some((id % 2) as usize), 2).unwrap();
    for (_, sweep, x, v) in &dev {
        let (a, iz) = if *sweep == 'a' { (*x, 10) } else { (4.0, (0..20).find(|&i| b.chain.z(i) == *x).unwrap()) };
        let want = (a - b.eq.policy.interpolate(a, iz)).powi(2);
        assert_eq!(*v, want);
    }
    let exact: Vec<SnapshotRow> = snaps.iter().map(|s| SnapshotRow { savings: b.eq.policy.interpolate(s.a_grid, s.z_index), ..*s }).collect();
    let dev = stats::policy_sq_deviation(&exact, 20, &b.eq.policy, |_| Some(0), 1).unwrap();
    assert!(dev.iter().all(|d| d.3 == 0.0));
    assert!(stats::policy_sq_deviation(&snaps, 99, &b.eq.policy, |_| Some(0), 1).is_err());
}

#[test]
fn statistics_ignore_childhood_records() {
    let b = common::baseline();
    let prices = b.prices();
    let panel = PanelDataset::rational(200, 100, 20, &b.eq.policy, &b.eq.distribution, 4).unwrap();
    let mut noisy = panel.clone();
    for r in noisy.rows.iter_mut().filter(|r| r.age < 20) {
        r.a = 0.0;
        r.mpc = 0.9;
        r.consumption = 7.0;
    }
    for view in [View::Learned, View::Rational] {
        assert_eq!(stats::adult_wealth(&panel, view), stats::adult_wealth(&noisy, view));
        assert_eq!(stats::h2m_frequency(&panel, view, prices).unwrap(), stats::h2m_frequency(&noisy, view, prices).unwrap());
        assert_eq!(stats::average_mpc(&panel, view).unwrap(), stats::average_mpc(&noisy, view).unwrap());
        assert_eq!(
            stats::h2m_persistence(&panel, view, prices, 2).unwrap(),
            stats::h2m_persistence(&noisy, view, prices, 2).unwrap()
        );
    }
    assert!(stats::h2m_flag(0.0, 0.5, prices));
    assert!(!stats::h2m_flag(prices.w * 0.6 / 6.0, 0.6, prices));
}

proptest! {
    #[test]
    fn gini_matches_brute_force_and_ignores_scale(v in prop::collection::vec(0.0f64..100.0, 2..60), scale in 0.01f64..100.0) {
        prop_assume!(v.iter().sum::<f64>() > 0.0);
        let g = stats::gini(&v).unwrap();
        prop_assert!((g - common::gini_brute(&v)).abs() < 1e-12);
        let scaled: Vec<f64> = v.iter().map(|x| x * scale).collect();
        prop_assert!((stats::gini(&scaled).unwrap() - g).abs() < 1e-12);
        let ones = vec![1.0; v.len()];
        prop_assert!((stats::gini_weighted(&v, &ones).unwrap() - g).abs() < 1e-12);
    }

    #[test]
    fn top_shares_are_ordered(v in prop::collection::vec(0.0f64..100.0, 1..200)) {
        prop_assume!(v.iter().sum::<f64>() > 0.0);
        let t = stats::top_shares(&v, &[0.01, 0.05, 0.2, 1.0]).unwrap();
        prop_assert!(t[0] <= t[1] + 1e-15 && t[1] <= t[2] + 1e-15);
        prop_assert!((t[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_slope_survives_monotone_transforms(pairs in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 3..100)) {
        let (p, c): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assume!(p.iter().any(|x| *x != p[0]));
        let s = stats::rank_rank_slope(&p, &c).unwrap();
        let p2: Vec<f64> = p.iter().map(|x| x.powi(3) + 2.0).collect();
        let c2: Vec<f64> = c.iter().map(|x| (x + 1.0).ln()).collect();
        prop_assert!((stats::rank_rank_slope(&p2, &c2).unwrap() - s).abs() < 1e-12);
    }

    #[test]
    fn welfare_is_zero_exactly_when_utilities_match(u in -100.0f64..-0.01, d in -0.5f64..0.5) {
        let (cv, ev) = stats::welfare_variation(u, u, 2.0).unwrap();
        prop_assert!(cv == 0.0 && ev == 0.0);
        prop_assume!(d.abs() > 1e-6);
        let (cv, ev) = stats::welfare_variation(u * (1.0 + d), u, 2.0).unwrap();
        prop_assert!(cv != 0.0 && ev != 0.0);
        prop_assert!(cv.signum() == ev.signum());
    }
}
