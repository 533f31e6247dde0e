//! Bounded falsification of `[α]φ`.
//!
//! Every resolution within the configured bounds is enumerated breadth-first
//! over loop iterations. Inside one loop evaluation, states that agree on all
//! variables still live at the loop head (after rounding to
//! [`MERGE_RESOLUTION`]) are explored once, which keeps the frontier finite
//! on models like the stop-sign controller.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use super::compile::{CompiledFormula, CompiledTerm, Layout};
use super::error::{ExecError, ExecResult};
use super::eval::eval_formula;
use super::flow::{CompiledFlow, FlowOptions};
use super::run::{run_with, ExecOptions, Outcome, Resolution, ScriptedResolver, Trace};
use super::state::State;
use crate::lang::{Formula, Program, Term};
use crate::scalar::Scalar;

/// States closer than this on every live variable count as the same state.
pub const MERGE_RESOLUTION: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundedCheckConfig<S = f64> {
    /// Maximum iterations of each loop evaluation.
    pub depth: usize,
    /// Finite candidate values for each `x := *` variable.
    pub samples: Vec<(String, Vec<S>)>,
    /// Dwell times tried for every continuous evolution; evaluated in the
    /// state where the evolution starts, so `0.5*eps` is allowed.
    pub dwell_times: Vec<Term>,
    pub initial_states: Vec<State<S>>,
    /// Upper bound on the number of intermediate states generated.
    pub budget: usize,
    pub flow: FlowOptions<S>,
}

impl<S: Scalar> BoundedCheckConfig<S> {
    pub fn new(initial_states: Vec<State<S>>, dwell_times: Vec<Term>, depth: usize) -> Self {
        BoundedCheckConfig {
            depth,
            samples: Vec::new(),
            dwell_times,
            initial_states,
            budget: 20_000_000,
            flow: FlowOptions::default(),
        }
    }
}

/// Cartesian grid of initial states, filtered by an `init` formula.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InitialGrid<S = f64> {
    pub axes: Vec<(String, Vec<S>)>,
    pub constants: State<S>,
}

impl<S: Scalar> InitialGrid<S> {
    /// All grid points (first axis varies slowest) that satisfy `init`.
    pub fn states(&self, init: &Formula) -> ExecResult<Vec<State<S>>> {
        let mut out = Vec::new();
        let mut idx = vec![0usize; self.axes.len()];
        if self.axes.iter().any(|(_, vals)| vals.is_empty()) {
            return Ok(out);
        }
        loop {
            let mut s = self.constants.clone();
            for ((name, vals), &i) in self.axes.iter().zip(&idx) {
                s.set(name.clone(), vals[i])?;
            }
            if eval_formula(init, &s)? {
                out.push(s);
            }
            let mut k = self.axes.len();
            loop {
                if k == 0 {
                    return Ok(out);
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < self.axes[k].1.len() {
                    break;
                }
                idx[k] = 0;
            }
        }
    }
}

/// Inclusive arithmetic range `start, start+step, ..., <= stop`.
pub fn inclusive_range<S: Scalar>(start: S, stop: S, step: S) -> ExecResult<Vec<S>> {
    if !(step > S::zero()) || !start.is_finite() || !stop.is_finite() {
        return Err(ExecError::InvalidArgument(format!("bad range {start}:{stop}:{step}")));
    }
    let n = ((stop - start) / step + S::lit(1e-9)).floor();
    if n < S::zero() {
        return Ok(Vec::new());
    }
    let n = n.to_usize().unwrap_or(0);
    Ok((0..=n).map(|k| start + S::lit(k as f64) * step).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample<S = f64> {
    /// Position of the starting state in the configured initial states.
    pub initial_index: usize,
    pub trace: Trace<S>,
    pub final_state: State<S>,
}

/// What the search covered when it found nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckSummary {
    pub depth: usize,
    pub initial_states: usize,
    pub dwell_times: Vec<String>,
    pub sampled_vars: Vec<String>,
    pub explored: usize,
}

impl fmt::Display for CheckSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "depth {}, {} initial states, dwell times [{}], {} states explored",
            self.depth,
            self.initial_states,
            self.dwell_times.join(", "),
            self.explored
        )?;
        if !self.sampled_vars.is_empty() {
            write!(f, ", sampled [{}]", self.sampled_vars.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict<S = f64> {
    NoCounterexampleFound(CheckSummary),
    Counterexample(Box<Counterexample<S>>),
}

impl<S> Verdict<S> {
    pub fn is_counterexample(&self) -> bool {
        matches!(self, Verdict::Counterexample(_))
    }
}

/// Searches for a run of `p` within the bounds of `cfg` ending in a state
/// that falsifies `post`. Runs are ordered by total loop iterations and then
/// lexicographically by their resolutions; the first falsifying one is
/// returned after being replayed through [`run_with`].
pub fn bounded_check<S: Scalar>(p: &Program, post: &Formula, cfg: &BoundedCheckConfig<S>) -> ExecResult<Verdict<S>> {
    let mut names = BTreeSet::new();
    p.collect_vars(&mut names);
    names.extend(post.vars());
    for s in &cfg.initial_states {
        names.extend(s.vars().map(str::to_string));
    }
    let layout = Layout::new(names);
    let post_vars: BTreeSet<String> = post.vars();
    let compiler = Compiler { layout: &layout, cfg };
    let node = compiler.compile(p, &post_vars)?;
    let mut search = Search {
        layout: &layout,
        post: CompiledFormula::compile(post, &layout)?,
        flow: cfg.flow,
        budget: cfg.budget,
        depth: cfg.depth,
        generated: 0,
        arena: Vec::new(),
    };
    let inputs: Vec<Item<S>> = cfg
        .initial_states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            search.arena.push(Step { parent: NONE, what: StepKind::Root(i) });
            Item { vals: layout.pack(s), path: (search.arena.len() - 1) as u32 }
        })
        .collect();
    let found = match search.exec(&node, inputs, true) {
        Ok(_) => None,
        Err(Halt::Found(path)) => Some(path),
        Err(Halt::Error(e)) => return Err(e),
    };
    let Some(path) = found else {
        return Ok(Verdict::NoCounterexampleFound(CheckSummary {
            depth: cfg.depth,
            initial_states: cfg.initial_states.len(),
            dwell_times: cfg.dwell_times.iter().map(ToString::to_string).collect(),
            sampled_vars: cfg.samples.iter().map(|(v, _)| v.clone()).collect(),
            explored: search.generated,
        }));
    };
    let (initial_index, resolutions) = search.reconstruct(path);
    let initial = &cfg.initial_states[initial_index];
    let mut resolver = ScriptedResolver::new(resolutions);
    let (outcome, trace) = run_with(p, initial, &mut resolver, &ExecOptions { flow: cfg.flow })?;
    match outcome {
        Outcome::Completed(final_state) if resolver.exhausted() && !eval_formula(post, &final_state)? => {
            Ok(Verdict::Counterexample(Box::new(Counterexample { initial_index, trace, final_state })))
        }
        Outcome::Completed(s) => Err(ExecError::ReplayDiverged(format!("replayed run ends in {s}, which satisfies the postcondition"))),
        Outcome::Aborted(f) => Err(ExecError::ReplayDiverged(format!("replayed run aborted at ?{f}"))),
    }
}

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
enum StepKind<S> {
    Root(usize),
    Res(Resolution<S>),
}

#[derive(Debug, Clone, Copy)]
struct Step<S> {
    parent: u32,
    what: StepKind<S>,
}

#[derive(Debug, Clone)]
struct Item<S> {
    vals: Vec<S>,
    path: u32,
}

enum Halt {
    Found(u32),
    Error(ExecError),
}

impl From<ExecError> for Halt {
    fn from(e: ExecError) -> Self {
        Halt::Error(e)
    }
}

enum Node<S> {
    Assign(usize, CompiledTerm<S>),
    AssignAny(usize, Vec<S>),
    Test(CompiledFormula<S>),
    Seq(Vec<Node<S>>),
    Choice(Box<Node<S>>, Box<Node<S>>),
    Loop { body: Box<Node<S>>, live: Vec<usize> },
    Ode { flow: CompiledFlow<S>, dwell: Vec<CompiledTerm<S>> },
}

struct Compiler<'a, S> {
    layout: &'a Layout,
    cfg: &'a BoundedCheckConfig<S>,
}

impl<S: Scalar> Compiler<'_, S> {
    fn slot(&self, var: &str) -> usize {
        self.layout.slot(var).expect("layout covers every program variable")
    }

    /// `out` is the set of variables live after `p`.
    fn compile(&self, p: &Program, out: &BTreeSet<String>) -> ExecResult<Node<S>> {
        Ok(match p {
            Program::Assign(x, t) => Node::Assign(self.slot(x), CompiledTerm::compile(t, self.layout)?),
            Program::AssignAny(x) => {
                let values = self
                    .cfg
                    .samples
                    .iter()
                    .find(|(v, _)| v == x)
                    .map(|(_, vals)| vals.clone())
                    .ok_or_else(|| ExecError::UnboundedSampling(x.clone()))?;
                Node::AssignAny(self.slot(x), values)
            }
            Program::Test(f) => Node::Test(CompiledFormula::compile(f, self.layout)?),
            Program::Seq(..) => {
                let items = p.seq_items();
                let mut outs = vec![out.clone(); items.len()];
                for k in (0..items.len().saturating_sub(1)).rev() {
                    outs[k] = live_in(items[k + 1], &outs[k + 1]);
                }
                Node::Seq(items.iter().zip(&outs).map(|(q, o)| self.compile(q, o)).collect::<ExecResult<_>>()?)
            }
            Program::Choice(a, b) => Node::Choice(Box::new(self.compile(a, out)?), Box::new(self.compile(b, out)?)),
            Program::Loop(body) => {
                let head = loop_head_live(body, out);
                let live = head.iter().map(|v| self.slot(v)).collect();
                Node::Loop { body: Box::new(self.compile(body, &head)?), live }
            }
            Program::Ode(ode) => {
                if self.cfg.dwell_times.is_empty() {
                    return Err(ExecError::InvalidArgument("no dwell times configured".into()));
                }
                Node::Ode {
                    flow: CompiledFlow::new(ode, self.layout)?,
                    dwell: self
                        .cfg
                        .dwell_times
                        .iter()
                        .map(|t| CompiledTerm::compile(t, self.layout))
                        .collect::<ExecResult<_>>()?,
                }
            }
        })
    }
}

fn term_vars(t: &Term) -> BTreeSet<String> {
    t.vars()
}

/// Variables whose value before `p` can influence anything live after it.
fn live_in(p: &Program, out: &BTreeSet<String>) -> BTreeSet<String> {
    match p {
        Program::Assign(x, t) => {
            let mut s = out.clone();
            s.remove(x);
            s.extend(term_vars(t));
            s
        }
        Program::AssignAny(x) => {
            let mut s = out.clone();
            s.remove(x);
            s
        }
        Program::Test(f) => {
            let mut s = out.clone();
            s.extend(f.vars());
            s
        }
        Program::Seq(..) => p.seq_items().iter().rev().fold(out.clone(), |acc, q| live_in(q, &acc)),
        Program::Choice(a, b) => {
            let mut s = live_in(a, out);
            s.extend(live_in(b, out));
            s
        }
        Program::Loop(body) => loop_head_live(body, out),
        Program::Ode(ode) => {
            let mut s = out.clone();
            for (x, t) in &ode.equations {
                s.insert(x.clone());
                s.extend(term_vars(t));
            }
            s.extend(ode.domain.vars());
            s
        }
    }
}

fn loop_head_live(body: &Program, out: &BTreeSet<String>) -> BTreeSet<String> {
    let mut head = out.clone();
    loop {
        let mut next = out.clone();
        next.extend(live_in(body, &head));
        if next == head {
            return head;
        }
        head = next;
    }
}

struct Search<'a, S> {
    layout: &'a Layout,
    post: CompiledFormula<S>,
    flow: FlowOptions<S>,
    budget: usize,
    depth: usize,
    generated: usize,
    arena: Vec<Step<S>>,
}

impl<S: Scalar> Search<'_, S> {
    fn extend(&mut self, parent: u32, r: Resolution<S>) -> Result<u32, Halt> {
        self.generated += 1;
        if self.generated > self.budget || self.arena.len() >= NONE as usize {
            return Err(ExecError::BudgetExceeded(self.budget).into());
        }
        self.arena.push(Step { parent, what: StepKind::Res(r) });
        Ok((self.arena.len() - 1) as u32)
    }

    fn count(&mut self, n: usize) -> Result<(), Halt> {
        self.generated += n;
        if self.generated > self.budget {
            return Err(ExecError::BudgetExceeded(self.budget).into());
        }
        Ok(())
    }

    fn check_terminal(&self, items: &[Item<S>]) -> Result<(), Halt> {
        for it in items {
            if !self.post.eval(&it.vals, self.layout)? {
                return Err(Halt::Found(it.path));
            }
        }
        Ok(())
    }

    fn reconstruct(&self, mut at: u32) -> (usize, Vec<Resolution<S>>) {
        let mut rs = Vec::new();
        loop {
            let step = self.arena[at as usize];
            match step.what {
                StepKind::Root(i) => {
                    rs.reverse();
                    return (i, rs);
                }
                StepKind::Res(r) => rs.push(r),
            }
            at = step.parent;
        }
    }

    /// Runs `node` on every input. When `terminal`, outputs are final states
    /// and are checked against the postcondition as soon as they exist.
    fn exec(&mut self, node: &Node<S>, inputs: Vec<Item<S>>, terminal: bool) -> Result<Vec<Item<S>>, Halt> {
        if inputs.is_empty() {
            return Ok(inputs);
        }
        let out = match node {
            Node::Assign(slot, t) => {
                let mut items = inputs;
                for it in &mut items {
                    let v = t.eval(&it.vals, self.layout)?;
                    it.vals[*slot] = v;
                }
                self.count(items.len())?;
                items
            }
            Node::AssignAny(slot, values) => {
                let mut items = Vec::with_capacity(inputs.len() * values.len());
                for it in &inputs {
                    for &v in values {
                        let path = self.extend(it.path, Resolution::Sample(v))?;
                        let mut vals = it.vals.clone();
                        vals[*slot] = v;
                        items.push(Item { vals, path });
                    }
                }
                items
            }
            Node::Test(f) => {
                let mut kept = Vec::with_capacity(inputs.len());
                for it in inputs {
                    if f.eval(&it.vals, self.layout)? {
                        kept.push(it);
                    }
                }
                kept
            }
            Node::Seq(children) => {
                let mut items = inputs;
                let last = children.len().saturating_sub(1);
                for (k, child) in children.iter().enumerate() {
                    items = self.exec(child, items, terminal && k == last)?;
                }
                return Ok(items);
            }
            Node::Choice(a, b) => {
                let mut left = Vec::with_capacity(inputs.len());
                let mut right = Vec::with_capacity(inputs.len());
                for it in &inputs {
                    left.push(Item { vals: it.vals.clone(), path: self.extend(it.path, Resolution::Branch(0))? });
                }
                let mut out = self.exec(a, left, terminal)?;
                for it in inputs {
                    right.push(Item { path: self.extend(it.path, Resolution::Branch(1))?, vals: it.vals });
                }
                out.extend(self.exec(b, right, terminal)?);
                return Ok(out);
            }
            Node::Loop { body, live } => return self.exec_loop(body, live, inputs, terminal),
            Node::Ode { flow, dwell } => {
                let mut items = Vec::with_capacity(inputs.len() * dwell.len());
                for it in &inputs {
                    if !flow.domain_holds(&it.vals)? {
                        continue;
                    }
                    for d in dwell {
                        let duration = d.eval(&it.vals, self.layout)?;
                        let path = self.extend(it.path, Resolution::Duration(duration))?;
                        let mut vals = it.vals.clone();
                        flow.advance(&mut vals, duration, &self.flow, None)?;
                        items.push(Item { vals, path });
                    }
                }
                items
            }
        };
        if terminal {
            self.check_terminal(&out)?;
        }
        Ok(out)
    }

    fn exec_loop(
        &mut self,
        body: &Node<S>,
        live: &[usize],
        inputs: Vec<Item<S>>,
        terminal: bool,
    ) -> Result<Vec<Item<S>>, Halt> {
        let q = S::lit(MERGE_RESOLUTION);
        let key = |vals: &[S]| -> Vec<u64> {
            live.iter().map(|&i| (vals[i] / q).round().as_f64().to_bits()).collect()
        };
        let mut seen: HashSet<Vec<u64>> = HashSet::new();
        let mut frontier = Vec::with_capacity(inputs.len());
        for it in inputs {
            if seen.insert(key(&it.vals)) {
                frontier.push(it);
            }
        }
        let mut out = Vec::new();
        let mut iteration = 0;
        while !frontier.is_empty() {
            let mut stopped = Vec::with_capacity(frontier.len());
            for it in &frontier {
                stopped.push(Item { vals: it.vals.clone(), path: self.extend(it.path, Resolution::Branch(0))? });
            }
            if terminal {
                self.check_terminal(&stopped)?;
            }
            out.extend(stopped);
            if iteration == self.depth {
                break;
            }
            let mut again = Vec::with_capacity(frontier.len());
            for it in frontier {
                again.push(Item { path: self.extend(it.path, Resolution::Branch(1))?, vals: it.vals });
            }
            let produced = self.exec(body, again, false)?;
            frontier = produced.into_iter().filter(|it| seen.insert(key(&it.vals))).collect();
            iteration += 1;
        }
        Ok(out)
    }
}
