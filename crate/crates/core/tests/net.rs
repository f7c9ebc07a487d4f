mod common;

use common::{net_away_from_kinks, reference_forward};
use nn_economy::agent::stream_rng;
use nn_economy::economy::Prices;
use nn_economy::net::{polyak_update, ActionBounds, Clip, Mlp};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn analytic_gradient_matches_finite_differences() {
    let worst = common::gradient_fd_check(100, 1);
    assert!(worst < 1e-5, "relative error {worst}");
}

#[test]
fn forward_matches_reference() {
    let mut rng = stream_rng(2, 0);
    for _ in 0..200 {
        let net = Mlp::init(&common::random_hidden(&mut rng), &mut rng).unwrap();
        let (a, z) = (rng.random_range(0.0..50.0), rng.random_range(0.1..4.0));
        let want = reference_forward(&net, a, z).0;
        assert!((net.forward(a, z).unwrap() - want).abs() <= 1e-12 * want.abs().max(1.0));
    }
}

#[test]
fn output_is_affine_between_kinks() {
    let mut rng = stream_rng(3, 0);
    let mut checked = 0;
    while checked < 100 {
        let (net, a, z) = net_away_from_kinks(&mut rng, 1e-2);
        let (da, dz) = (rng.random_range(-1.0..1.0) * 1e-4, rng.random_range(-1.0..1.0) * 1e-4);
        let pts: Vec<(f64, f64)> = (0..3).map(|k| (a + k as f64 * da, z + k as f64 * dz)).collect();
        let signs = |p: (f64, f64)| reference_forward(&net, p.0, p.1).1.iter().map(|s| *s > 0.0).collect::<Vec<_>>();
        if signs(pts[0]) != signs(pts[2]) {
            continue;
        }
        let f: Vec<f64> = pts.iter().map(|p| net.forward(p.0, p.1).unwrap()).collect();
        assert!((f[1] - 0.5 * (f[0] + f[2])).abs() < 1e-9, "{f:?}");
        checked += 1;
    }
}

#[test]
fn initial_weights_are_centred() {
    let mut rng = stream_rng(4, 0);
    let mut draws = Vec::new();
    while draws.len() < 100_000 {
        let net = Mlp::init(&[8, 8], &mut rng).unwrap();
        draws.extend_from_slice(net.params());
    }
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let sd = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(mean.abs() < 3.0 * sd / n.sqrt(), "mean {mean}, se {}", sd / n.sqrt());
}

#[test]
fn saturated_output_hits_the_cap() {
    let prices = Prices { r: 0.0329, w: 1.05 };
    let b = ActionBounds::new(0.01, 0.0, 50.0, 0.3).unwrap();
    assert_eq!(b.clip(1e6, 50.0, 1.0, prices), (50.0, Clip::Cap));
    assert_eq!(b.clip(-1e6, 0.0, 1.0, prices), (0.0, Clip::Floor));
}

#[test]
fn clipped_actions_stay_feasible() {
    assert_eq!(common::clip_violations(100_000, 5), 0);
}

proptest! {
    #[test]
    fn polyak_follows_geometric_closed_form(lambda in 0.001f64..1.0, k in 1usize..50, seed in 0u64..1000) {
        let mut rng = stream_rng(seed, 0);
        let source = Mlp::init(&[3], &mut rng).unwrap();
        let start = Mlp::init(&[3], &mut rng).unwrap();
        let mut target = start.clone();
        for _ in 0..k {
            polyak_update(&mut target, &source, lambda).unwrap();
        }
        let keep = (1.0 - lambda).powi(k as i32);
        for ((t, s), t0) in target.params().iter().zip(source.params()).zip(start.params()) {
            prop_assert!((t - (s * (1.0 - keep) + t0 * keep)).abs() < 1e-12);
        }
    }

    #[test]
    fn snapshots_round_trip(seed in 0u64..1000) {
        let mut rng = stream_rng(seed, 0);
        let net = Mlp::init(&common::random_hidden(&mut rng), &mut rng).unwrap();
        prop_assert_eq!(Mlp::from_json(&net.to_json()).unwrap(), net);
    }

    #[test]
    fn clip_code_round_trips(code in 0u8..4) {
        let clip = Clip::from_code(code).unwrap();
        prop_assert_eq!(clip.code(), code);
        prop_assert_eq!(clip.fired(), code != 0);
    }
}
