//! Stop-sign helpers: the shield built from the model file and an exact
//! optimal-return oracle over the closed-form double integrator.

use std::collections::HashMap;

use hybrid_shield::envs::CarEnvConfig;
use hybrid_shield::exec::{State, TraceEvent};
use hybrid_shield::lang::Model;
use hybrid_shield::shield::{extract_guards, split_control_loop, ControlLoop, GuardTable};

pub const MODEL: &str = include_str!("../../../../models/stopsign.hp");
pub const MUTATED: &str = include_str!("../../../../models/stopsign_mutated.hp");
pub const CHECK_CFG: &str = include_str!("../../../../models/stopsign.cfg");

pub fn shield_from(text: &str) -> (GuardTable, ControlLoop) {
    let model = Model::parse(text).unwrap();
    let plant = split_control_loop(&model.program).unwrap();
    let table = extract_guards(&plant.ctrl, Some(&["brake", "accel"]), "brake").unwrap();
    (table, plant)
}

/// Closed-form successor of one control period.
pub fn step(cfg: &CarEnvConfig, x: f64, v: f64, accel: bool) -> (f64, f64) {
    let eps = cfg.params.eps;
    if accel {
        let a = cfg.accel_actual;
        (x + v * eps + 0.5 * a * eps * eps, v + a * eps)
    } else {
        let b = cfg.brake_actual;
        if v - b * eps <= 0.0 {
            (x + v * v / (2.0 * b), 0.0)
        } else {
            (x + v * eps - 0.5 * b * eps * eps, v - b * eps)
        }
    }
}

/// The reaction-time guard of the model, written out by hand.
pub fn accel_admissible(cfg: &CarEnvConfig, x: f64, v: f64) -> bool {
    let p = cfg.params;
    let m = cfg.stop;
    2.0 * p.brake * (m - x) >= v * v + (p.accel + p.brake) * (p.accel * p.eps * p.eps + 2.0 * p.eps * v)
}

/// Best undiscounted shielded return from `(x, v)`, ignoring the step cap.
/// Braking at rest is a self-loop with no reward and is skipped.
pub fn optimal_return(cfg: &CarEnvConfig, x: f64, v: f64, memo: &mut HashMap<(i64, i64), f64>) -> f64 {
    let key = ((x * 1e9).round() as i64, (v * 1e9).round() as i64);
    if let Some(&r) = memo.get(&key) {
        return r;
    }
    let mut best = f64::NEG_INFINITY;
    for accel in [true, false] {
        if accel && !accel_admissible(cfg, x, v) {
            continue;
        }
        if !accel && v == 0.0 {
            continue;
        }
        let (nx, nv) = step(cfg, x, v, accel);
        let mut r = cfg.progress_weight * (nx - x);
        if nx > cfg.stop {
            r -= cfg.violation_penalty;
        } else if nv < 1e-6 && cfg.stop - nx <= cfg.stop_tolerance {
            r += cfg.stop_bonus;
        } else {
            r += optimal_return(cfg, nx, nv, memo);
        }
        best = best.max(r);
    }
    let best = if best.is_finite() { best } else { 0.0 };
    memo.insert(key, best);
    best
}

/// Whether each continuous segment of a trace agrees, within 1e-6, with
/// constant acceleration from the state the segment started in.
pub fn segments_follow_closed_form(initial: &State, events: &[TraceEvent<f64>]) -> bool {
    let mut prev = initial.clone();
    for ev in events {
        match ev {
            TraceEvent::Discrete { state, .. } => prev = state.clone(),
            TraceEvent::Continuous { duration, state, .. } => {
                let get = |s: &State, k: &str| s.value(k).unwrap();
                let (x, v, a, d) = (get(&prev, "x"), get(&prev, "v"), get(&prev, "a"), *duration);
                if (get(state, "x") - (x + v * d + 0.5 * a * d * d)).abs() > 1e-6
                    || (get(state, "v") - (v + a * d)).abs() > 1e-6
                {
                    return false;
                }
                prev = state.clone();
            }
            TraceEvent::TestFailure { .. } => {}
        }
    }
    true
}
