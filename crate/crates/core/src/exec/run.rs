//! Execution of hybrid programs with nondeterminism resolved by a [`Resolver`].

use std::io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::error::{ExecError, ExecResult};
use super::eval::{eval_formula, eval_term};
use super::flow::{flow_with, FlowOptions};
use super::state::State;
use crate::lang::{Formula, OdeSystem, Program};
use crate::scalar::Scalar;

/// What a branch query is deciding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    /// `α ∪ β`: 0 runs the left branch, 1 the right.
    Choice,
    /// Before loop iteration `iteration`: 0 stops, 1 runs the body again.
    Loop { iteration: usize },
}

/// Resolves the nondeterminism of a run.
pub trait Resolver<S: Scalar> {
    fn choose(&mut self, branches: usize, decision: Decision, state: &State<S>) -> ExecResult<usize>;
    fn sample_any(&mut self, var: &str, state: &State<S>) -> ExecResult<S>;
    /// How long the next continuous evolution should run (it may stop
    /// earlier at the domain boundary).
    fn duration(&mut self, ode: &OdeSystem, state: &State<S>) -> ExecResult<S>;
}

/// One resolved nondeterministic decision, in execution order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resolution<S> {
    Branch(usize),
    Sample(S),
    Duration(S),
}

/// Replays a recorded list of resolutions.
#[derive(Debug, Clone)]
pub struct ScriptedResolver<S> {
    script: Vec<Resolution<S>>,
    next: usize,
}

impl<S: Scalar> ScriptedResolver<S> {
    pub fn new(script: Vec<Resolution<S>>) -> Self {
        ScriptedResolver { script, next: 0 }
    }

    pub fn exhausted(&self) -> bool {
        self.next == self.script.len()
    }

    fn pop(&mut self, what: &str) -> ExecResult<Resolution<S>> {
        let r = self
            .script
            .get(self.next)
            .copied()
            .ok_or_else(|| ExecError::ResolverContract(format!("script exhausted while resolving {what}")))?;
        self.next += 1;
        Ok(r)
    }
}

impl<S: Scalar> Resolver<S> for ScriptedResolver<S> {
    fn choose(&mut self, _: usize, _: Decision, _: &State<S>) -> ExecResult<usize> {
        match self.pop("a branch")? {
            Resolution::Branch(i) => Ok(i),
            other => Err(ExecError::ResolverContract(format!("expected a branch, script has {other:?}"))),
        }
    }

    fn sample_any(&mut self, _: &str, _: &State<S>) -> ExecResult<S> {
        match self.pop("a sample")? {
            Resolution::Sample(v) => Ok(v),
            other => Err(ExecError::ResolverContract(format!("expected a sample, script has {other:?}"))),
        }
    }

    fn duration(&mut self, _: &OdeSystem, _: &State<S>) -> ExecResult<S> {
        match self.pop("a duration")? {
            Resolution::Duration(d) => Ok(d),
            other => Err(ExecError::ResolverContract(format!("expected a duration, script has {other:?}"))),
        }
    }
}

/// Seeded random resolver: uniform branches, at most `max_iterations` loop
/// iterations, samples uniform in `sample_range`, durations drawn from
/// `durations`.
#[derive(Debug, Clone)]
pub struct RandomResolver<S> {
    rng: ChaCha8Rng,
    pub max_iterations: usize,
    pub sample_range: (S, S),
    pub durations: Vec<S>,
}

impl<S: Scalar> RandomResolver<S> {
    pub fn new(seed: u64, max_iterations: usize, sample_range: (S, S), durations: Vec<S>) -> Self {
        RandomResolver { rng: ChaCha8Rng::seed_from_u64(seed), max_iterations, sample_range, durations }
    }
}

impl<S: Scalar> Resolver<S> for RandomResolver<S> {
    fn choose(&mut self, branches: usize, decision: Decision, _: &State<S>) -> ExecResult<usize> {
        if let Decision::Loop { iteration } = decision {
            if iteration >= self.max_iterations {
                return Ok(0);
            }
        }
        Ok(self.rng.random_range(0..branches))
    }

    fn sample_any(&mut self, _: &str, _: &State<S>) -> ExecResult<S> {
        let u = S::lit(self.rng.random::<f64>());
        Ok(self.sample_range.0 + u * (self.sample_range.1 - self.sample_range.0))
    }

    fn duration(&mut self, _: &OdeSystem, _: &State<S>) -> ExecResult<S> {
        if self.durations.is_empty() {
            return Err(ExecError::ResolverContract("no durations configured".into()));
        }
        let i = self.rng.random_range(0..self.durations.len());
        Ok(self.durations[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceEvent<S> {
    Discrete { time: S, description: String, state: State<S> },
    Continuous { time: S, duration: S, state: State<S> },
    TestFailure { time: S, formula: Formula },
}

impl<S: Scalar> TraceEvent<S> {
    pub fn time(&self) -> S {
        match self {
            TraceEvent::Discrete { time, .. }
            | TraceEvent::Continuous { time, .. }
            | TraceEvent::TestFailure { time, .. } => *time,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            TraceEvent::Discrete { .. } => "discrete",
            TraceEvent::Continuous { .. } => "continuous",
            TraceEvent::TestFailure { .. } => "test_failure",
        }
    }

    pub fn state(&self) -> Option<&State<S>> {
        match self {
            TraceEvent::Discrete { state, .. } | TraceEvent::Continuous { state, .. } => Some(state),
            TraceEvent::TestFailure { .. } => None,
        }
    }
}

/// Record of one run: the start state, time-ordered events and the
/// resolutions consumed along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace<S = f64> {
    pub initial: State<S>,
    pub events: Vec<TraceEvent<S>>,
    pub resolutions: Vec<Resolution<S>>,
}

impl<S: Scalar> Trace<S> {
    pub fn final_state(&self) -> &State<S> {
        self.events.iter().rev().find_map(TraceEvent::state).unwrap_or(&self.initial)
    }

    /// CSV with columns `time,event_kind,<vars...>`; the first row is the
    /// initial state. Test failures repeat the last known state.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut vars: Vec<String> = self.initial.vars().map(str::to_string).collect();
        for e in &self.events {
            if let Some(s) = e.state() {
                vars.extend(s.vars().map(str::to_string));
            }
        }
        vars.sort();
        vars.dedup();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["time".to_string(), "event_kind".to_string()];
        header.extend(vars.iter().cloned());
        w.write_record(&header)?;
        let mut row = |time: S, kind: &str, s: &State<S>| {
            let mut rec = vec![time.to_string(), kind.to_string()];
            rec.extend(vars.iter().map(|v| s.get(v).map(|x| x.to_string()).unwrap_or_default()));
            w.write_record(&rec)
        };
        row(S::zero(), "init", &self.initial)?;
        let mut last = &self.initial;
        for e in &self.events {
            if let Some(s) = e.state() {
                last = s;
            }
            row(e.time(), e.kind(), last)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome<S = f64> {
    Completed(State<S>),
    /// A test (or an initially violated evolution domain) failed.
    Aborted(Formula),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExecOptions<S> {
    pub flow: FlowOptions<S>,
}

impl<S: Scalar> Default for ExecOptions<S> {
    fn default() -> Self {
        ExecOptions { flow: FlowOptions::default() }
    }
}

/// Runs `p` from `s`, consulting `r` for every nondeterministic decision.
pub fn run<S: Scalar>(p: &Program, s: &State<S>, r: &mut dyn Resolver<S>) -> ExecResult<(Outcome<S>, Trace<S>)> {
    run_with(p, s, r, &ExecOptions::default())
}

pub fn run_with<S: Scalar>(
    p: &Program,
    s: &State<S>,
    r: &mut dyn Resolver<S>,
    opts: &ExecOptions<S>,
) -> ExecResult<(Outcome<S>, Trace<S>)> {
    let mut ctx = RunCtx { r, opts, time: S::zero(), events: Vec::new(), resolutions: Vec::new() };
    let mut state = s.clone();
    let completed = ctx.exec(p, &mut state)?;
    let trace = Trace { initial: s.clone(), events: ctx.events, resolutions: ctx.resolutions };
    let outcome = match completed {
        None => Outcome::Completed(state),
        Some(f) => Outcome::Aborted(f),
    };
    Ok((outcome, trace))
}

struct RunCtx<'a, S: Scalar> {
    r: &'a mut dyn Resolver<S>,
    opts: &'a ExecOptions<S>,
    time: S,
    events: Vec<TraceEvent<S>>,
    resolutions: Vec<Resolution<S>>,
}

impl<S: Scalar> RunCtx<'_, S> {
    fn branch(&mut self, n: usize, decision: Decision, s: &State<S>) -> ExecResult<usize> {
        let i = self.r.choose(n, decision, s)?;
        if i >= n {
            return Err(ExecError::ResolverContract(format!("branch {i} chosen out of {n}")));
        }
        self.resolutions.push(Resolution::Branch(i));
        Ok(i)
    }

    fn fail(&mut self, f: &Formula) -> Option<Formula> {
        self.events.push(TraceEvent::TestFailure { time: self.time, formula: f.clone() });
        Some(f.clone())
    }

    /// Returns the failed formula if the run aborted.
    fn exec(&mut self, p: &Program, s: &mut State<S>) -> ExecResult<Option<Formula>> {
        match p {
            Program::Assign(var, t) => {
                let v = eval_term(t, s)?;
                s.set(var.clone(), v)?;
                self.events.push(TraceEvent::Discrete {
                    time: self.time,
                    description: p.to_string(),
                    state: s.clone(),
                });
            }
            Program::AssignAny(var) => {
                let v = self.r.sample_any(var, s)?;
                if !v.is_finite() {
                    return Err(ExecError::ResolverContract(format!("non-finite sample for `{var}`")));
                }
                self.resolutions.push(Resolution::Sample(v));
                s.set(var.clone(), v)?;
                self.events.push(TraceEvent::Discrete {
                    time: self.time,
                    description: format!("{var} := {v}"),
                    state: s.clone(),
                });
            }
            Program::Test(f) => {
                if !eval_formula(f, s)? {
                    return Ok(self.fail(f));
                }
            }
            Program::Seq(a, b) => {
                if let Some(f) = self.exec(a, s)? {
                    return Ok(Some(f));
                }
                return self.exec(b, s);
            }
            Program::Choice(a, b) => {
                let i = self.branch(2, Decision::Choice, s)?;
                return self.exec(if i == 0 { a } else { b }, s);
            }
            Program::Loop(body) => {
                let mut iteration = 0;
                while self.branch(2, Decision::Loop { iteration }, s)? == 1 {
                    if let Some(f) = self.exec(body, s)? {
                        return Ok(Some(f));
                    }
                    iteration += 1;
                }
            }
            Program::Ode(ode) => {
                if !eval_formula(&ode.domain, s)? {
                    return Ok(self.fail(&ode.domain));
                }
                let d = self.r.duration(ode, s)?;
                if !(d >= S::zero()) || !d.is_finite() {
                    return Err(ExecError::ResolverContract(format!("invalid flow duration {d}")));
                }
                self.resolutions.push(Resolution::Duration(d));
                let res = flow_with(ode, s, d, &self.opts.flow, false)?;
                *s = res.state;
                self.time = self.time + res.elapsed;
                self.events.push(TraceEvent::Continuous {
                    time: self.time,
                    duration: res.elapsed,
                    state: s.clone(),
                });
            }
        }
        Ok(None)
    }
}
