//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! fails.

#[path = "../../core/tests/support/car.rs"]
#[allow(dead_code)]
mod car;
#[path = "../../core/tests/support/crossing.rs"]
#[allow(dead_code)]
mod crossing;
#[path = "../../core/tests/support/gen.rs"]
mod gen;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::{Config as ProptestConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hpshield_cli::{cmd_adapt, cmd_check, cmd_penalty_sweep, layered_config, Settings, EXIT_COUNTEREXAMPLE, EXIT_OK};
use hybrid_shield::agent::{evaluate_greedy, run_episode, train, AgentResult, Discretizer, TrainConfig};
use hybrid_shield::config::Config;
use hybrid_shield::envs::{car_reset, CarEnv, CarEnvConfig, CrossingEnvConfig, SymbolicObserver};
use hybrid_shield::exec::{bounded_check, eval_formula, flow, BoundedCheckConfig, State, Verdict};
use hybrid_shield::lang::{parse_formula, parse_program, print_formula, print_program, Model, Program};

fn models() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn settings(config_file: Option<&str>, out: &Path) -> Settings {
    let file = config_file.map(|f| models().join(f));
    let cfg = layered_config(file.as_deref(), &[], |_| None).unwrap();
    Settings::new(cfg, out.to_path_buf(), None).unwrap()
}

type Outcome = (bool, String);

/// 10,000 shielded episodes under three proposal policies from a wide
/// range of admissible starts; every visited state must have x <= m.
fn shield_safety() -> Outcome {
    let cfg = CarEnvConfig { x_range: (0.0, 100.0), v_range: (0.0, 14.0), ..CarEnvConfig::default() };
    let (table, _) = car::shield_from(car::MODEL);
    let mut env = CarEnv::new(cfg.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut episodes, mut states, mut over, mut interventions) = (0, 0, 0, 0);
    for (policy, n) in [("random", 3334u64), ("accel", 3333), ("alternate", 3333)] {
        for seed in 0..n {
            let mut k = 0usize;
            let mut propose = |_: &State| -> AgentResult<String> {
                k += 1;
                let accel = match policy {
                    "random" => rng.random_bool(0.5),
                    "accel" => true,
                    _ => k % 2 == 0,
                };
                Ok(if accel { "accel" } else { "brake" }.to_string())
            };
            let trace = run_episode(&mut env, &mut SymbolicObserver, Some(&table), 0.0, seed, &mut propose).unwrap();
            episodes += 1;
            interventions += trace.interventions();
            for s in trace.steps.iter().map(|r| &r.state).chain([&trace.final_state]) {
                states += 1;
                if s.value("x").unwrap() > cfg.stop {
                    over += 1;
                }
            }
            over += trace.violations();
        }
    }
    (over == 0, format!("{episodes} episodes, {states} states, {over} with x > m, {interventions} interventions"))
}

/// The mutated guard is falsified by the checker and lets the car overshoot.
fn guard_necessity(out: &Path) -> Outcome {
    let s = settings(None, out);
    let code = cmd_check(&s, &models().join("stopsign_mutated.hp")).unwrap();
    let cfg = CarEnvConfig::default();
    let (mutated, _) = car::shield_from(car::MUTATED);
    let mut env = CarEnv::new(cfg).unwrap();
    let mut violations = 0;
    for seed in 0..1000 {
        let mut propose = |_: &State| -> AgentResult<String> { Ok("accel".into()) };
        violations += run_episode(&mut env, &mut SymbolicObserver, Some(&mutated), 0.0, seed, &mut propose)
            .unwrap()
            .violations();
    }
    (
        code == EXIT_COUNTEREXAMPLE && violations >= 1,
        format!("check exit {code} at depth 20, {violations} violations in 1000 shielded episodes"),
    )
}

/// The faithful model survives the default check; counterexamples of two
/// mutants replay to unsafe terminal states along closed-form segments.
fn check_soundness(out: &Path) -> Outcome {
    let code = cmd_check(&settings(None, out), &models().join("stopsign.hp")).unwrap();
    let mutants = [
        car::MUTATED.to_string(),
        car::MODEL.replace("2*b*(m-x) >= v^2+(A+b)*(A*eps^2+2*eps*v)", "m-x >= 2"),
    ];
    let check_cfg = Config::parse(car::CHECK_CFG).unwrap();
    let mut replayed = 0;
    for text in &mutants {
        let model = Model::parse(text).unwrap();
        let cfg = BoundedCheckConfig::from_config(&check_cfg, "check", &model.init).unwrap();
        if let Verdict::Counterexample(cx) = bounded_check(&model.program, &model.safe, &cfg).unwrap() {
            let unsafe_end = !eval_formula(&model.safe, &cx.final_state).unwrap();
            if unsafe_end && car::segments_follow_closed_form(&cx.trace.initial, &cx.trace.events) {
                replayed += 1;
            }
        }
    }
    (
        code == EXIT_OK && replayed == mutants.len(),
        format!("faithful model exit {code}; {replayed}/{} mutant counterexamples replayed", mutants.len()),
    )
}

fn integrator_accuracy() -> Outcome {
    let Program::Ode(sys) = parse_program("{x' = v, v' = a}").unwrap() else { unreachable!() };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (x0, v0, a): (f64, f64, f64) = (rng.random_range(-100.0..100.0), rng.random_range(-10.0..10.0), rng.random_range(-5.0..5.0));
        let t: f64 = rng.random_range(0.0..=10.0);
        let s = State::from_pairs([("x", x0), ("v", v0), ("a", a)]);
        let out = flow(&sys, &s, t, 1e-3).unwrap().state;
        worst = worst.max((out.value("x").unwrap() - (x0 + v0 * t + 0.5 * a * t * t)).abs());
        worst = worst.max((out.value("v").unwrap() - (v0 + a * t)).abs());
    }
    (worst <= 1e-6, format!("1000 flows up to 10 s at step 1e-3, max error {worst:.2e}"))
}

fn parser_round_trip() -> Outcome {
    let (_, formulas, programs) = gen::trees(8);
    let mut runner = TestRunner::new(ProptestConfig { cases: 1000, ..ProptestConfig::default() });
    let (mut ok_p, mut ok_f) = (0, 0);
    for _ in 0..1000 {
        let p = programs.new_tree(&mut runner).unwrap().current();
        ok_p += usize::from(parse_program(&print_program(&p)).as_ref() == Ok(&p));
        let f = formulas.new_tree(&mut runner).unwrap().current();
        ok_f += usize::from(parse_formula(&print_formula(&f)).as_ref() == Ok(&f));
    }
    (ok_p == 1000 && ok_f == 1000, format!("{ok_p}/1000 programs, {ok_f}/1000 formulas at depth <= 8"))
}

fn perception_round_trip() -> Outcome {
    let grid = crossing::square_grid();
    let (checked, wrong, occlusion_misses) = crossing::exhaustive(&grid);
    let noisy = CrossingEnvConfig { noise: 0.05, ..grid };
    let good = crossing::noisy_trials(&noisy, 100, 6);
    (
        wrong == 0 && occlusion_misses == 0 && good >= 99,
        format!("{checked} noiseless frames, {wrong} misread; sigma 0.05: {good}/100 within 1 px"),
    )
}

fn adaptation(out: &Path) -> Outcome {
    let (code, r) = cmd_adapt(&settings(Some("adapt.cfg"), out)).unwrap();
    let flagged = r.mismatch.first_flagged;
    let b_hat = r.estimate.map_or(f64::NAN, |e| e.brake);
    let pre = r.phase1_violations >= 1 || r.mismatch.flag;
    let ok = code == EXIT_OK
        && flagged.is_some_and(|i| i < 50)
        && r.usable_brake_records >= 200
        && (b_hat - 0.5).abs() <= 0.05
        && r.phase3_violations == Some(0)
        && pre;
    (
        ok,
        format!(
            "flagged at step {flagged:?}, b_hat {b_hat:.6} from {} braking samples, {} violations before, {:?} after over {} episodes",
            r.usable_brake_records, r.phase1_violations, r.phase3_violations, r.phase3_episodes
        ),
    )
}

fn learning_sanity() -> Outcome {
    let cfg = CarEnvConfig::default();
    let (table, _) = car::shield_from(car::MODEL);
    let disc = Discretizer::car_default(cfg.stop).unwrap();
    let mut env = CarEnv::new(cfg.clone()).unwrap();
    let tc = TrainConfig { episodes: 5000, ..TrainConfig::default() };
    let (q, log) = train(&mut env, &mut SymbolicObserver, &disc, Some(&table), &tc).unwrap();
    let seeds: Vec<u64> = (1_000_000..1_000_100).collect();
    let got: f64 = evaluate_greedy(&mut env, &mut SymbolicObserver, &disc, &q, Some(&table), 0.0, &seeds)
        .unwrap()
        .iter()
        .sum::<f64>()
        / seeds.len() as f64;
    let mut memo = HashMap::new();
    let best: f64 = seeds
        .iter()
        .map(|&s| {
            let st = car_reset(&cfg, s).unwrap();
            car::optimal_return(&cfg, st.value("x").unwrap(), st.value("v").unwrap(), &mut memo)
        })
        .sum::<f64>()
        / seeds.len() as f64;
    let gap = best - got;
    (
        gap <= 0.05 * best.abs() && log.total_violations() == 0,
        format!("greedy mean {got:.4} vs optimum {best:.4} ({:.2}%), {} training violations", 100.0 * got / best, log.total_violations()),
    )
}

fn penalty_sweep(a: &Path, b: &Path) -> Outcome {
    let first = cmd_penalty_sweep(&settings(Some("sweep.cfg"), a), None).unwrap();
    let second = cmd_penalty_sweep(&settings(Some("sweep.cfg"), b), None).unwrap();
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    let identical = read(a, "sweep.csv") == read(b, "sweep.csv") && read(a, "sweep_summary.csv") == read(b, "sweep_summary.csv");
    let rows = csv::Reader::from_path(a.join("sweep.csv")).unwrap().records().count();
    let episodes: usize = settings(Some("sweep.cfg"), a).train().unwrap().episodes;
    (
        first == EXIT_OK && second == EXIT_OK && identical && rows == 3 * episodes,
        format!("p in {{0, -10, -100}}: {rows} rows, reruns byte-identical: {identical}"),
    )
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().unwrap();
    let sub = |n: &str| {
        let p = dir.path().join(n);
        std::fs::create_dir_all(&p).unwrap();
        p
    };
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("shield safety", Box::new(shield_safety)),
        ("guard necessity", Box::new(|| guard_necessity(&sub("c2")))),
        ("bounded check soundness", Box::new(|| check_soundness(&sub("c3")))),
        ("integrator accuracy", Box::new(integrator_accuracy)),
        ("parser round trip", Box::new(parser_round_trip)),
        ("perception round trip", Box::new(perception_round_trip)),
        ("adaptation", Box::new(|| adaptation(&sub("c7")))),
        ("learning sanity", Box::new(learning_sanity)),
        ("penalty sweep harness", Box::new(|| penalty_sweep(&sub("c9a"), &sub("c9b")))),
    ];
    let mut lines = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = run();
        let line = format!(
            "criterion {} {}: {name}: {detail} [{:.1} s]",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        println!("{line}");
        lines.push((ok, line));
    }
    println!("\nacceptance summary");
    for (_, line) in &lines {
        println!("{line}");
    }
    if lines.iter().all(|(ok, _)| *ok) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
