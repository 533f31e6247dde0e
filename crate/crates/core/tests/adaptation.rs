mod support;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use hybrid_shield::envs::{CarEnv, CarEnvConfig, Environment};
use hybrid_shield::exec::{FlowOptions, State};
use hybrid_shield::shield::{
    detect_mismatch, estimate_params, resynthesize_guards, shield_action, GuardTable, ModelParams, TransitionRecord,
};

use support::car::{shield_from, MODEL};

fn degraded() -> CarEnvConfig {
    CarEnvConfig {
        params: ModelParams::new(1.0, 1.0, 0.1),
        brake_actual: 0.5,
        ..CarEnvConfig::default()
    }
}

/// Random proposals through `table`; returns the transitions and the number
/// of violating steps.
fn rollouts(cfg: &CarEnvConfig, table: &GuardTable, episodes: u64) -> (Vec<TransitionRecord>, usize) {
    let mut env = CarEnv::new(cfg.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut records, mut violations) = (Vec::new(), 0);
    for seed in 0..episodes {
        env.reset(seed).unwrap();
        loop {
            let before = env.ground_truth();
            let proposed = if rng.random_bool(0.5) { "accel" } else { "brake" };
            let action = shield_action(table, &before, proposed, 0.0).unwrap().action.to_string();
            let out = env.step(&action).unwrap();
            violations += usize::from(out.violation);
            records.push(TransitionRecord { before, action, after: env.ground_truth(), elapsed: env.last_elapsed() });
            if out.done {
                break;
            }
        }
    }
    (records, violations)
}

#[test]
fn weak_brakes_are_flagged_early() {
    let cfg = degraded();
    let (table, plant) = shield_from(MODEL);
    let (records, _) = rollouts(&cfg, &table, 3);
    let report = detect_mismatch(&records, &table, &cfg.params, &plant, 0.01, &FlowOptions::with_step(cfg.step)).unwrap();
    assert!(report.flag);
    assert!(report.first_flagged.unwrap() < 50);
    let honest = CarEnvConfig { brake_actual: 1.0, ..cfg.clone() };
    let (records, _) = rollouts(&honest, &table, 3);
    let report = detect_mismatch(&records, &table, &honest.params, &plant, 0.01, &FlowOptions::with_step(cfg.step)).unwrap();
    assert!(!report.flag, "residual {}", report.max_residual);
}

/// Hand-built braking records `v -> v - b dt`, observed with Gaussian noise
/// on the after-velocity.
fn noisy_brake_records(b: f64, sigma: f64, n: usize, seed: u64) -> Vec<TransitionRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    (0..n)
        .map(|_| {
            let v = rng.random_range(1.0..10.0);
            let dt = 0.1;
            TransitionRecord {
                before: State::from_pairs([("v", v)]),
                action: "brake".into(),
                after: State::from_pairs([("v", v - b * dt + noise.sample(&mut rng))]),
                elapsed: dt,
            }
        })
        .chain([TransitionRecord {
            before: State::from_pairs([("v", 0.0)]),
            action: "accel".into(),
            after: State::from_pairs([("v", 0.1)]),
            elapsed: 0.1,
        }])
        .collect()
}

#[test]
fn braking_estimate_within_ten_percent_under_noise() {
    for seed in 0..50 {
        let est = estimate_params(&noisy_brake_records(0.5, 0.01, 200, seed), "brake", "accel", "v").unwrap();
        assert!((est.brake - 0.5).abs() <= 0.05, "seed {seed}: {}", est.brake);
        assert!((est.accel - 1.0).abs() < 1e-9);
    }
    let exact = estimate_params(&noisy_brake_records(0.5, 1e-12, 200, 0), "brake", "accel", "v").unwrap();
    assert!((exact.brake - 0.5).abs() < 1e-9);
}

#[test]
fn resynthesized_shield_is_safe_where_the_stale_one_fails() {
    let cfg = degraded();
    let (stale, _) = shield_from(MODEL);
    let (records, stale_violations) = rollouts(&cfg, &stale, 20);
    assert!(stale_violations > 0);
    let est = estimate_params(&records, "brake", "accel", "v").unwrap();
    assert!((est.brake - 0.5).abs() < 1e-6);
    let fresh = resynthesize_guards(&stale, &cfg.params, &est, 0.9).unwrap();
    let learned = CarEnvConfig { params: ModelParams::new(est.accel, 0.9 * est.brake, est.eps), ..cfg };
    let (_, violations) = rollouts(&learned, &fresh, 300);
    assert_eq!(violations, 0);
}
