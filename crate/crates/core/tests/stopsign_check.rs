mod support;

use hybrid_shield::config::Config;
use hybrid_shield::exec::{bounded_check, eval_formula, BoundedCheckConfig, Verdict};
use hybrid_shield::lang::Model;

use support::car::{segments_follow_closed_form, CHECK_CFG, MODEL, MUTATED};

fn check_config(model: &Model, depth: usize) -> BoundedCheckConfig {
    let mut cfg = Config::parse(CHECK_CFG).unwrap();
    cfg.set("check.depth", depth.to_string());
    BoundedCheckConfig::from_config(&cfg, "check", &model.init).unwrap()
}

#[test]
fn mutated_guard_yields_a_replayable_counterexample() {
    let model = Model::parse(MUTATED).unwrap();
    let cfg = check_config(&model, 20);
    let Verdict::Counterexample(cx) = bounded_check(&model.program, &model.safe, &cfg).unwrap() else {
        panic!("mutated model should be falsified");
    };
    assert!(!eval_formula(&model.safe, &cx.final_state).unwrap());
    assert!(cx.final_state.value("x").unwrap() > cx.final_state.value("m").unwrap());
    assert!(eval_formula(&model.init, &cx.trace.initial).unwrap());
    assert_eq!(cx.trace.final_state(), &cx.final_state);
    assert!(segments_follow_closed_form(&cx.trace.initial, &cx.trace.events));
}

#[test]
fn faithful_model_has_no_shallow_counterexample() {
    let model = Model::parse(MODEL).unwrap();
    let cfg = check_config(&model, 6);
    let verdict = bounded_check(&model.program, &model.safe, &cfg).unwrap();
    let Verdict::NoCounterexampleFound(summary) = verdict else {
        panic!("faithful model falsified: {verdict:?}");
    };
    assert_eq!(summary.depth, 6);
    assert!(summary.initial_states > 0);
}

#[test]
fn exhausted_budget_is_an_error() {
    let model = Model::parse(MODEL).unwrap();
    let mut cfg = check_config(&model, 20);
    cfg.budget = 1000;
    assert!(bounded_check(&model.program, &model.safe, &cfg).is_err());
}
