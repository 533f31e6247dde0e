use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use hybrid_shield::agent::{run_episode, train, write_policy, AgentResult, EpisodeTrace, TrainConfig, TrainingLog};
use hybrid_shield::envs::{
    crossing_reset, crossing_step, CarEnv, CarEnvConfig, CrossingEnv, CrossingObserver, Environment, Observer,
    SymbolicObserver,
};
use hybrid_shield::exec::{
    bounded_check, eval_formula, eval_term, run_with, BoundedCheckConfig, Decision, ExecOptions, ExecResult,
    FlowOptions, Outcome, RandomResolver, Resolver, State, Verdict,
};
use hybrid_shield::lang::{Model, OdeSystem, Term};
use hybrid_shield::shield::{
    detect_mismatch, estimate_params, resynthesize_guards, usable_records, write_transitions, GuardTable,
    MismatchReport, ModelParams, TransitionRecord,
};

use crate::output::{out_path, write_atomic};
use crate::settings::{read_text, EnvKind, Settings};
use crate::{CliError, EXIT_COUNTEREXAMPLE, EXIT_OK};

fn parse_model(path: &Path) -> Result<Model, CliError> {
    let text = read_text(path)?;
    Model::parse(&text).map_err(|e| CliError::Input(format!("{}: {}", path.display(), e.render(&text))))
}

/// Bounded falsification of `safe` over the `[check]` grid. Exit 0 when
/// nothing is found, 1 with `counterexample.csv` written otherwise.
pub fn cmd_check(settings: &Settings, model_path: &Path) -> Result<i32, CliError> {
    let model = parse_model(model_path)?;
    let cfg = BoundedCheckConfig::<f64>::from_config(&settings.config, "check", &model.init)?;
    if cfg.initial_states.is_empty() {
        return Err(CliError::Input("no grid point satisfies the init formula".into()));
    }
    match bounded_check(&model.program, &model.safe, &cfg)? {
        Verdict::NoCounterexampleFound(summary) => {
            println!("no counterexample found: {summary}");
            Ok(EXIT_OK)
        }
        Verdict::Counterexample(cx) => {
            let path = out_path(&settings.out, "counterexample.csv")?;
            write_atomic(&path, |w| Ok(cx.trace.write_csv(w)?))?;
            println!("counterexample from initial state #{}: {}", cx.initial_index, cx.trace.initial);
            println!("final state violating the safety formula: {}", cx.final_state);
            println!("trace written to {}", path.display());
            Ok(EXIT_COUNTEREXAMPLE)
        }
    }
}

/// Keeps looping for a fixed number of iterations and resolves everything
/// else at random.
struct Driver {
    inner: RandomResolver<f64>,
    iterations: usize,
}

impl Resolver<f64> for Driver {
    fn choose(&mut self, branches: usize, decision: Decision, s: &State) -> ExecResult<usize> {
        match decision {
            Decision::Loop { iteration } => Ok(usize::from(iteration < self.iterations)),
            Decision::Choice => self.inner.choose(branches, decision, s),
        }
    }

    fn sample_any(&mut self, var: &str, s: &State) -> ExecResult<f64> {
        self.inner.sample_any(var, s)
    }

    fn duration(&mut self, ode: &OdeSystem, s: &State) -> ExecResult<f64> {
        self.inner.duration(ode, s)
    }
}

fn make_env(settings: &Settings) -> Result<(Box<dyn Environment>, Box<dyn Observer>), CliError> {
    Ok(match settings.env_kind()? {
        EnvKind::Car => (Box::new(CarEnv::new(settings.car()?)?), Box::new(SymbolicObserver)),
        EnvKind::Crossing => {
            let c = settings.crossing()?;
            (Box::new(CrossingEnv::new(c.clone())?), Box::new(CrossingObserver::new(&c)?))
        }
    })
}

/// Proposal policy: `random` draws uniformly from a generator seeded per
/// episode, anything else is proposed verbatim at every step.
fn proposer(policy: &str, actions: &[String], seed: u64) -> Result<impl FnMut(&State) -> AgentResult<String>, CliError> {
    if policy != "random" && !actions.iter().any(|a| a == policy) {
        return Err(CliError::Input(format!("simulate.policy: unknown policy `{policy}`")));
    }
    let (policy, actions) = (policy.to_string(), actions.to_vec());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    Ok(move |_: &State| {
        Ok(if policy == "random" { actions[rng.random_range(0..actions.len())].clone() } else { policy.clone() })
    })
}

fn shield_for(settings: &Settings, on: bool) -> Result<Option<GuardTable>, CliError> {
    on.then(|| settings.shield_table()).transpose()
}

/// Without a model: runs `simulate.episodes` episodes per seed of the
/// configured environment and writes one step log each (plus PGM frames for
/// the crossing world with `simulate.frames = on`). With a model: runs the
/// program from the `[check]` initial states with random resolutions and
/// writes the traces.
pub fn cmd_simulate(settings: &Settings, model: Option<&Path>) -> Result<i32, CliError> {
    if let Some(path) = model {
        return simulate_model(settings, path);
    }
    let cfg = &settings.config;
    let episodes: usize = cfg.get_or("simulate.episodes", 1)?;
    let policy = cfg.raw("simulate.policy").unwrap_or("random").to_string();
    let frames = matches!(cfg.raw("simulate.frames"), Some("on" | "true" | "yes" | "1"));
    let tc = settings.train()?;
    let shield = shield_for(settings, tc.shield)?;
    let (mut env, mut observer) = make_env(settings)?;
    for &seed in &settings.seeds {
        let seeded = TrainConfig { seed, ..tc.clone() };
        for k in 0..episodes {
            let ep_seed = seeded.episode_seed(k);
            let mut propose = proposer(&policy, env.actions(), ep_seed)?;
            let trace =
                run_episode(env.as_mut(), observer.as_mut(), shield.as_ref(), tc.margin, ep_seed, &mut propose)?;
            let name = format!("episode_s{seed}_e{k}");
            write_atomic(&out_path(&settings.out, &format!("{name}.csv"))?, |w| Ok(trace.write_csv(w)?))?;
            if frames && settings.env_kind()? == EnvKind::Crossing {
                write_frames(settings, &trace, &settings.out.join(&name))?;
            }
            println!(
                "seed {seed} episode {k}: reward {}, steps {}, violations {}, interventions {}",
                trace.reward(),
                trace.steps.len(),
                trace.violations(),
                trace.interventions()
            );
        }
    }
    Ok(EXIT_OK)
}

fn write_frames(settings: &Settings, trace: &EpisodeTrace, dir: &Path) -> Result<(), CliError> {
    let c = settings.crossing()?;
    let (mut world, frame) = crossing_reset(&c, trace.seed)?;
    write_atomic(&out_path(dir, "step_000.pgm")?, |w| Ok(frame.write_pgm(w)?))?;
    for (i, step) in trace.steps.iter().enumerate() {
        let out = crossing_step(&c, &world, &step.action)?;
        write_atomic(&dir.join(format!("step_{:03}.pgm", i + 1)), |w| Ok(out.frame.write_pgm(w)?))?;
        world = out.world;
    }
    Ok(())
}

fn simulate_model(settings: &Settings, path: &Path) -> Result<i32, CliError> {
    let model = parse_model(path)?;
    let cfg = BoundedCheckConfig::<f64>::from_config(&settings.config, "check", &model.init)?;
    if cfg.initial_states.is_empty() {
        return Err(CliError::Input("no grid point satisfies the init formula".into()));
    }
    let iterations: usize = settings.config.get_or("simulate.iterations", 20)?;
    let opts = ExecOptions { flow: cfg.flow };
    for &seed in &settings.seeds {
        let init = &cfg.initial_states[(seed % cfg.initial_states.len() as u64) as usize];
        let durations = cfg.dwell_times.iter().map(|t: &Term| eval_term(t, init)).collect::<Result<Vec<_>, _>>()?;
        let mut r = Driver { inner: RandomResolver::new(seed, iterations, (-1.0, 1.0), durations), iterations };
        let (outcome, trace) = run_with(&model.program, init, &mut r, &opts)?;
        let path = out_path(&settings.out, &format!("trace_s{seed}.csv"))?;
        write_atomic(&path, |w| Ok(trace.write_csv(w)?))?;
        match outcome {
            Outcome::Completed(s) => {
                let safe = eval_formula(&model.safe, &s)?;
                println!("seed {seed}: completed from {init}, safe = {safe}, final {s}");
            }
            Outcome::Aborted(f) => println!("seed {seed}: run from {init} aborted at test {f}"),
        }
    }
    Ok(EXIT_OK)
}

/// One training run of the configured environment.
pub fn train_once(settings: &Settings, tc: &TrainConfig) -> Result<(hybrid_shield::agent::QTable, TrainingLog), CliError> {
    let disc = settings.discretizer()?;
    let shield = shield_for(settings, tc.shield)?;
    let (mut env, mut observer) = make_env(settings)?;
    Ok(train(env.as_mut(), observer.as_mut(), &disc, shield.as_ref(), tc)?)
}

fn write_log(path: &Path, log: &TrainingLog) -> Result<(), CliError> {
    write_atomic(path, |w| Ok(log.write_csv(w)?))
}

/// Trains once per seed (in parallel) and writes `train_s<seed>.csv`,
/// `policy_s<seed>.csv` and the per-episode means in `train_summary.csv`.
pub fn cmd_train(settings: &Settings) -> Result<i32, CliError> {
    let tc = settings.train()?;
    let disc = settings.discretizer()?;
    let runs: Vec<_> = settings
        .seeds
        .par_iter()
        .map(|&seed| train_once(settings, &TrainConfig { seed, ..tc.clone() }))
        .collect::<Result<_, _>>()?;
    for (&seed, (q, log)) in settings.seeds.iter().zip(&runs) {
        write_log(&out_path(&settings.out, &format!("train_s{seed}.csv"))?, log)?;
        let policy = out_path(&settings.out, &format!("policy_s{seed}.csv"))?;
        write_atomic(&policy, |w| Ok(write_policy(q, &disc, w)?))?;
        println!(
            "seed {seed}: {} episodes, total violations {}, total interventions {}, mean reward of last 10% {:.4}",
            log.episodes.len(),
            log.total_violations(),
            log.total_interventions(),
            tail_mean(log)
        );
    }
    let logs: Vec<&TrainingLog> = runs.iter().map(|(_, l)| l).collect();
    write_atomic(&out_path(&settings.out, "train_summary.csv")?, |w| summary_csv(&logs, w))?;
    let total: usize = logs.iter().map(|l| l.total_violations()).sum();
    println!("total violations over {} seeds: {total}", logs.len());
    Ok(EXIT_OK)
}

fn tail_mean(log: &TrainingLog) -> f64 {
    let n = log.episodes.len();
    let k = (n / 10).max(1).min(n);
    if k == 0 {
        return 0.0;
    }
    log.episodes[n - k..].iter().map(|e| e.reward).sum::<f64>() / k as f64
}

fn summary_csv(logs: &[&TrainingLog], out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["episode", "reward_mean", "violations_mean", "interventions_mean", "steps_mean", "seeds"])?;
    let n = logs.iter().map(|l| l.episodes.len()).min().unwrap_or(0);
    let k = logs.len() as f64;
    for ep in 0..n {
        let mean = |f: &dyn Fn(&hybrid_shield::agent::EpisodeLog) -> f64| {
            logs.iter().map(|l| f(&l.episodes[ep])).sum::<f64>() / k
        };
        w.write_record([
            ep.to_string(),
            mean(&|e| e.reward).to_string(),
            mean(&|e| e.violations as f64).to_string(),
            mean(&|e| e.interventions as f64).to_string(),
            mean(&|e| e.steps as f64).to_string(),
            logs.len().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Trains every (penalty, seed) pair with otherwise identical settings and
/// writes `sweep.csv` keyed by (penalty, seed, episode) plus
/// `sweep_summary.csv`. The comparison against `p = 0` is printed, not
/// judged.
pub fn cmd_penalty_sweep(settings: &Settings, penalties: Option<Vec<f64>>) -> Result<i32, CliError> {
    let penalties = match penalties {
        Some(p) => p,
        None => settings.config.list("sweep.penalties")?.unwrap_or_default(),
    };
    if penalties.is_empty() {
        return Err(CliError::Usage("penalty sweep needs at least one penalty".into()));
    }
    let tc = settings.train()?;
    let jobs: Vec<(f64, u64)> = penalties.iter().flat_map(|&p| settings.seeds.iter().map(move |&s| (p, s))).collect();
    for &(p, _) in &jobs {
        TrainConfig { penalty: p, ..tc.clone() }.validate()?;
    }
    let logs: Vec<TrainingLog> = jobs
        .par_iter()
        .map(|&(penalty, seed)| train_once(settings, &TrainConfig { penalty, seed, ..tc.clone() }).map(|(_, l)| l))
        .collect::<Result<_, _>>()?;
    write_atomic(&out_path(&settings.out, "sweep.csv")?, |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["penalty", "seed", "episode", "reward", "violations", "interventions", "steps"])?;
        for (&(p, seed), log) in jobs.iter().zip(&logs) {
            for e in &log.episodes {
                w.write_record([
                    p.to_string(),
                    seed.to_string(),
                    e.episode.to_string(),
                    e.reward.to_string(),
                    e.violations.to_string(),
                    e.interventions.to_string(),
                    e.steps.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    })?;
    let mut rows = Vec::new();
    for &p in &penalties {
        let mine: Vec<&TrainingLog> = jobs.iter().zip(&logs).filter(|((q, _), _)| *q == p).map(|(_, l)| l).collect();
        let eps: usize = mine.iter().map(|l| l.episodes.len()).sum();
        let mean = mine.iter().flat_map(|l| &l.episodes).map(|e| e.reward).sum::<f64>() / eps.max(1) as f64;
        let tail = mine.iter().map(|l| tail_mean(l)).sum::<f64>() / mine.len() as f64;
        let viol: usize = mine.iter().map(|l| l.total_violations()).sum();
        let inter: usize = mine.iter().map(|l| l.total_interventions()).sum();
        rows.push((p, mine.len(), mean, tail, viol, inter));
    }
    write_atomic(&out_path(&settings.out, "sweep_summary.csv")?, |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["penalty", "runs", "reward_mean", "final_reward_mean", "violations", "interventions"])?;
        for (p, n, mean, tail, viol, inter) in &rows {
            w.write_record([p.to_string(), n.to_string(), mean.to_string(), tail.to_string(), viol.to_string(), inter.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let base = rows.iter().find(|r| r.0 == 0.0).map(|r| r.2);
    for (p, n, mean, tail, viol, inter) in &rows {
        let mut line = format!(
            "penalty {p}: {n} runs, mean reward {mean:.4}, final mean {tail:.4}, violations {viol}, interventions {inter}"
        );
        if let (Some(b), true) = (base, *p != 0.0) {
            let verdict = if *mean < b { "lower than" } else { "not lower than" };
            let _ = write!(line, " (mean reward {verdict} penalty 0)");
        }
        println!("{line}");
    }
    Ok(EXIT_OK)
}

/// Outcome of the three adaptation phases.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptReport {
    pub phase1_steps: usize,
    pub phase1_violations: usize,
    pub mismatch: MismatchReport,
    pub usable_brake_records: usize,
    pub estimate: Option<ModelParams>,
    pub phase3_episodes: usize,
    pub phase3_violations: Option<usize>,
    pub check_counterexample: Option<bool>,
}

impl AdaptReport {
    fn rows(&self) -> Vec<(String, String)> {
        let opt = |v: Option<String>| v.unwrap_or_default();
        let mut rows = vec![
            ("phase1_steps".to_string(), self.phase1_steps.to_string()),
            ("phase1_violations".into(), self.phase1_violations.to_string()),
            ("mismatch".into(), self.mismatch.flag.to_string()),
            ("first_flagged_step".into(), opt(self.mismatch.first_flagged.map(|i| i.to_string()))),
            ("max_residual".into(), self.mismatch.max_residual.to_string()),
        ];
        for (var, r) in &self.mismatch.residuals {
            rows.push((format!("residual.{var}"), r.to_string()));
        }
        rows.extend([
            ("usable_brake_records".into(), self.usable_brake_records.to_string()),
            ("A_hat".into(), opt(self.estimate.map(|p| p.accel.to_string()))),
            ("b_hat".into(), opt(self.estimate.map(|p| p.brake.to_string()))),
            ("eps_hat".into(), opt(self.estimate.map(|p| p.eps.to_string()))),
            ("phase3_episodes".into(), self.phase3_episodes.to_string()),
            ("phase3_violations".into(), opt(self.phase3_violations.map(|v| v.to_string()))),
            ("check_counterexample".into(), opt(self.check_counterexample.map(|v| v.to_string()))),
        ]);
        rows
    }
}

fn shielded_random_episodes(
    env_cfg: &CarEnvConfig,
    table: &GuardTable,
    episodes: usize,
    base: &TrainConfig,
    mut on_step: impl FnMut(TransitionRecord),
) -> Result<TrainingLog, CliError> {
    let mut env = CarEnv::new(env_cfg.clone())?;
    let mut log = TrainingLog::default();
    for k in 0..episodes {
        let seed = base.episode_seed(k);
        let mut propose = proposer("random", env.actions(), seed)?;
        env.reset(seed)?;
        let mut entry = hybrid_shield::agent::EpisodeLog { episode: k, reward: 0.0, violations: 0, interventions: 0, steps: 0 };
        loop {
            let before = env.ground_truth();
            let proposed = propose(&before)?;
            let d = hybrid_shield::shield::shield_action(table, &before, &proposed, base.margin)?;
            let action = d.action.to_string();
            let out = env.step(&action)?;
            on_step(TransitionRecord { before, action, after: env.ground_truth(), elapsed: env.last_elapsed() });
            entry.reward += out.reward;
            entry.violations += usize::from(out.violation);
            entry.interventions += usize::from(d.intervened);
            entry.steps += 1;
            if out.done {
                break;
            }
        }
        log.episodes.push(entry);
    }
    Ok(log)
}

/// Staged adaptation on the car: phase 1 runs the stale shield and records
/// transitions, phase 2 fits `A`, `b`, `eps` and rebuilds the guards, phase
/// 3 reruns with the new guards (resetting under the learned brake) and the
/// model is re-checked with the learned constants.
pub fn cmd_adapt(settings: &Settings) -> Result<(i32, AdaptReport), CliError> {
    let cfg = &settings.config;
    let car = settings.car()?;
    let (stale, plant) = settings.car_shield()?;
    let phase1: usize = cfg.get_or("adapt.phase1_episodes", 20)?;
    let phase3: usize = cfg.get_or("adapt.phase3_episodes", 1000)?;
    let threshold: f64 = cfg.get_or("adapt.threshold", 0.01)?;
    let factor: f64 = cfg.get_or("adapt.factor", 0.9)?;
    let min_records: usize = cfg.get_or("adapt.min_records", 200)?;
    let check_depth: usize = cfg.get_or("adapt.check_depth", 6)?;
    let base = TrainConfig { seed: settings.seeds[0], ..settings.train()? };

    let mut records = Vec::new();
    let log1 = shielded_random_episodes(&car, &stale, phase1, &base, |r| records.push(r))?;
    let flow = FlowOptions::with_step(car.step);
    let mismatch = detect_mismatch(&records, &stale, &car.params, &plant, threshold, &flow)?;
    write_atomic(&out_path(&settings.out, "adapt_transitions.csv")?, |w| Ok(write_transitions(&records, w)?))?;
    write_log(&out_path(&settings.out, "adapt_phase1.csv")?, &log1)?;
    let mut report = AdaptReport {
        phase1_steps: records.len(),
        phase1_violations: log1.total_violations(),
        usable_brake_records: usable_records(&records, "brake"),
        mismatch,
        estimate: None,
        phase3_episodes: 0,
        phase3_violations: None,
        check_counterexample: None,
    };
    println!(
        "phase 1: {} steps, {} violations, max residual {:.6} (threshold {threshold})",
        report.phase1_steps, report.phase1_violations, report.mismatch.max_residual
    );
    let mut code = EXIT_OK;
    if !report.mismatch.flag {
        println!("model consistent: no resynthesis");
    } else {
        println!("mismatch flagged at step {}", report.mismatch.first_flagged.unwrap_or(0));
        if report.usable_brake_records < min_records {
            write_report(settings, &report)?;
            return Err(CliError::InsufficientData(format!(
                "{} usable braking transitions, need {min_records}",
                report.usable_brake_records
            )));
        }
        let est = estimate_params(&records, "brake", "accel", "v")?;
        let table = resynthesize_guards(&stale, &car.params, &est, factor)?;
        write_atomic(&out_path(&settings.out, "adapt_guards.hp")?, |w| Ok(w.write_all(table.to_hp().as_bytes())?))?;
        println!("phase 2: A = {}, b = {}, eps = {}", est.accel, est.brake, est.eps);
        let learned = ModelParams::new(est.accel, factor * est.brake, est.eps);
        let car3 = CarEnvConfig { params: learned, ..car.clone() };
        let log3 = shielded_random_episodes(&car3, &table, phase3, &base, |_| {})?;
        write_log(&out_path(&settings.out, "adapt_phase3.csv")?, &log3)?;
        report.estimate = Some(est);
        report.phase3_episodes = phase3;
        report.phase3_violations = Some(log3.total_violations());
        println!("phase 3: {phase3} episodes, {} violations", log3.total_violations());

        let (_, model) = settings.shield_model()?;
        let mut check_cfg = cfg.clone();
        check_cfg.set("check.depth", check_depth.to_string());
        for (k, v) in learned.values() {
            check_cfg.set(format!("check.const.{k}"), v.to_string());
        }
        let bcfg = BoundedCheckConfig::<f64>::from_config(&check_cfg, "check", &model.init)?;
        let verdict = bounded_check(&model.program, &model.safe, &bcfg)?;
        report.check_counterexample = Some(verdict.is_counterexample());
        match verdict {
            Verdict::NoCounterexampleFound(s) => println!("learned model: no counterexample ({s})"),
            Verdict::Counterexample(cx) => {
                println!("learned model: counterexample from {}", cx.trace.initial);
                code = EXIT_COUNTEREXAMPLE;
            }
        }
    }
    write_report(settings, &report)?;
    Ok((code, report))
}

fn write_report(settings: &Settings, report: &AdaptReport) -> Result<(), CliError> {
    write_atomic(&out_path(&settings.out, "adapt_report.csv")?, |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["metric", "value"])?;
        for (k, v) in report.rows() {
            w.write_record([k, v])?;
        }
        w.flush()?;
        Ok(())
    })
}
