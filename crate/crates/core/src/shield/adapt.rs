//! Runtime model checking of observed transitions, parameter re-estimation
//! and guard resynthesis.

use std::collections::{BTreeMap, BTreeSet};
use std::io;

use super::error::{ShieldError, ShieldResult};
use super::table::{apply_action, ControlLoop, GuardTable};
use crate::exec::{eval_term, flow_with, FlowOptions, State};
use crate::lang::Term;

pub const DEFAULT_SAFETY_FACTOR: f64 = 0.9;
/// Three times the 1e-6 accuracy floor of the integrator.
pub const DEFAULT_MISMATCH_THRESHOLD: f64 = 3e-6;

/// Dynamics parameters of the stop-sign model, bound to the variables
/// `A` (m/s^2), `b` (m/s^2) and `eps` (s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub accel: f64,
    pub brake: f64,
    pub eps: f64,
}

impl ModelParams {
    pub const VARS: [&'static str; 3] = ["A", "b", "eps"];

    pub fn new(accel: f64, brake: f64, eps: f64) -> Self {
        ModelParams { accel, brake, eps }
    }

    pub fn validate(&self) -> ShieldResult<()> {
        let ok = self.accel.is_finite() && self.brake.is_finite() && self.eps.is_finite();
        if !ok || self.accel < 0.0 || self.brake <= 0.0 || self.eps <= 0.0 {
            return Err(ShieldError::InvalidParams(format!(
                "need A >= 0, b > 0, eps > 0; got A = {}, b = {}, eps = {}",
                self.accel, self.brake, self.eps
            )));
        }
        Ok(())
    }

    pub fn values(&self) -> [(&'static str, f64); 3] {
        [("A", self.accel), ("b", self.brake), ("eps", self.eps)]
    }

    /// `s` with the parameter variables overwritten.
    pub fn bind(&self, s: &State) -> ShieldResult<State> {
        let mut out = s.clone();
        for (k, v) in self.values() {
            out.set(k, v)?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRecord {
    pub before: State,
    pub action: String,
    pub after: State,
    /// Time actually spent flowing, in seconds.
    pub elapsed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MismatchReport {
    pub flag: bool,
    /// Largest residual seen for each ODE variable.
    pub residuals: BTreeMap<String, f64>,
    pub max_residual: f64,
    pub window: usize,
    /// Index of the first record whose residual exceeded the threshold.
    pub first_flagged: Option<usize>,
}

/// Replays each record through the modelled plant (action assignments,
/// prelude, then the ODE for the record's elapsed time, all under `params`)
/// and compares the prediction with the observed after-state on the ODE
/// variables.
pub fn detect_mismatch(
    records: &[TransitionRecord],
    table: &GuardTable,
    params: &ModelParams,
    plant: &ControlLoop,
    threshold: f64,
    flow: &FlowOptions<f64>,
) -> ShieldResult<MismatchReport> {
    if records.is_empty() {
        return Err(ShieldError::EmptyWindow);
    }
    let mut residuals: BTreeMap<String, f64> = plant.ode.variables().map(|v| (v.to_string(), 0.0)).collect();
    let mut first_flagged = None;
    for (i, rec) in records.iter().enumerate() {
        let predicted = predict(rec, table, params, plant, flow)?;
        let mut worst: f64 = 0.0;
        for (var, slot) in residuals.iter_mut() {
            let r = (predicted.value(var)? - rec.after.value(var)?).abs();
            *slot = slot.max(r);
            worst = worst.max(r);
        }
        if worst > threshold && first_flagged.is_none() {
            first_flagged = Some(i);
        }
    }
    let max_residual = residuals.values().copied().fold(0.0, f64::max);
    Ok(MismatchReport { flag: max_residual > threshold, residuals, max_residual, window: records.len(), first_flagged })
}

/// The modelled after-state of one transition.
pub fn predict(
    rec: &TransitionRecord,
    table: &GuardTable,
    params: &ModelParams,
    plant: &ControlLoop,
    flow: &FlowOptions<f64>,
) -> ShieldResult<State> {
    let mut s = apply_action(table, &params.bind(&rec.before)?, &rec.action)?;
    for (x, t) in &plant.prelude {
        let v = eval_term(t, &s)?;
        s.set(x.clone(), v)?;
    }
    Ok(flow_with(&plant.ode, &s, rec.elapsed, flow, false)?.state)
}

/// Least-squares constant acceleration `sum(dt*dv) / sum(dt^2)` for each of
/// the two actions; `b` is the negated braking estimate and `eps` the
/// longest observed elapsed time. Records with zero elapsed time carry no
/// information and are skipped.
pub fn estimate_params(
    records: &[TransitionRecord],
    brake_action: &str,
    accel_action: &str,
    velocity: &str,
) -> ShieldResult<ModelParams> {
    let fit = |action: &str| -> ShieldResult<f64> {
        let (mut num, mut den) = (0.0, 0.0);
        for r in records.iter().filter(|r| r.action == action && r.elapsed > 0.0) {
            let dv = r.after.value(velocity)? - r.before.value(velocity)?;
            num += r.elapsed * dv;
            den += r.elapsed * r.elapsed;
        }
        if den > 0.0 {
            Ok(num / den)
        } else {
            Err(ShieldError::InsufficientData(action.to_string()))
        }
    };
    let brake = -fit(brake_action)?;
    let accel = fit(accel_action)?;
    let eps = records.iter().map(|r| r.elapsed).fold(0.0, f64::max);
    Ok(ModelParams { accel, brake, eps })
}

/// Number of records of `action` with positive elapsed time.
pub fn usable_records(records: &[TransitionRecord], action: &str) -> usize {
    records.iter().filter(|r| r.action == action && r.elapsed > 0.0).count()
}

/// Rewrites every guard of `template` with `A`, `b` and `eps` replaced by the
/// constants `new.accel`, `safety_factor * new.brake` and `new.eps`.
/// Assignments keep their symbolic form. `old` is the parameter set the
/// template was validated under and must itself be valid.
pub fn resynthesize_guards(
    template: &GuardTable,
    old: &ModelParams,
    new: &ModelParams,
    safety_factor: f64,
) -> ShieldResult<GuardTable> {
    old.validate()?;
    new.validate()?;
    if !(safety_factor > 0.0 && safety_factor <= 1.0) {
        return Err(ShieldError::InvalidParams(format!("safety factor {safety_factor} not in (0, 1]")));
    }
    let values = [("A", new.accel), ("b", safety_factor * new.brake), ("eps", new.eps)];
    let subst = |name: &str| values.iter().find(|(k, _)| *k == name).map(|(_, v)| Term::constant(*v));
    template.map_guards(|g| g.substitute(&subst))
}

/// CSV with columns `before.<var>...`, `action`, `after.<var>...`, `dt`.
pub fn write_transitions<W: io::Write>(records: &[TransitionRecord], out: W) -> ShieldResult<()> {
    let csv_err = |e: csv::Error| ShieldError::Csv(e.to_string());
    let mut vars = BTreeSet::new();
    for r in records {
        vars.extend(r.before.vars().map(str::to_string));
        vars.extend(r.after.vars().map(str::to_string));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = vars.iter().map(|v| format!("before.{v}")).collect();
    header.push("action".into());
    header.extend(vars.iter().map(|v| format!("after.{v}")));
    header.push("dt".into());
    w.write_record(&header).map_err(csv_err)?;
    for r in records {
        let cell = |s: &State, v: &str| s.get(v).map(|x| x.to_string()).unwrap_or_default();
        let mut row: Vec<String> = vars.iter().map(|v| cell(&r.before, v)).collect();
        row.push(r.action.clone());
        row.extend(vars.iter().map(|v| cell(&r.after, v)));
        row.push(r.elapsed.to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| ShieldError::Csv(e.to_string()))
}

pub fn read_transitions<R: io::Read>(input: R) -> ShieldResult<Vec<TransitionRecord>> {
    let csv_err = |e: csv::Error| ShieldError::Csv(e.to_string());
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers().map_err(csv_err)?.clone();
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row.map_err(csv_err)?;
        let (mut before, mut after) = (State::new(), State::new());
        let (mut action, mut dt) = (None, None);
        for (name, cell) in header.iter().zip(row.iter()) {
            let num = || cell.parse::<f64>().map_err(|e| ShieldError::Csv(format!("{name}: {e}")));
            if name == "action" {
                action = Some(cell.to_string());
            } else if name == "dt" {
                dt = Some(num()?);
            } else if cell.is_empty() {
                continue;
            } else if let Some(v) = name.strip_prefix("before.") {
                before.set(v, num()?)?;
            } else if let Some(v) = name.strip_prefix("after.") {
                after.set(v, num()?)?;
            }
        }
        let action = action.ok_or_else(|| ShieldError::Csv("missing action column".into()))?;
        let elapsed = dt.ok_or_else(|| ShieldError::Csv("missing dt column".into()))?;
        out.push(TransitionRecord { before, action, after, elapsed });
    }
    Ok(out)
}
