use std::collections::BTreeMap;

use super::error::{ShieldError, ShieldResult};
use crate::exec::{eval_formula, eval_term, robustness, State};
use crate::lang::model::{find_section, parse_section, split_sections};
use crate::lang::{parse_program, Formula, OdeSystem, ParseError, Program, Term};
use crate::scalar::Scalar;

/// One guarded branch of a controller.
#[derive(Debug, Clone, PartialEq)]
pub struct GuardEntry {
    pub action: String,
    pub assignments: Vec<(String, Term)>,
    pub guard: Formula,
}

impl GuardEntry {
    pub fn new(action: impl Into<String>, assignments: Vec<(String, Term)>, guard: Formula) -> Self {
        GuardEntry { action: action.into(), assignments, guard }
    }

    /// The branch as a program: `?guard; x1 := t1; ...`.
    pub fn to_program(&self) -> Program {
        let test = (self.guard != Formula::True).then(|| Program::Test(self.guard.clone()));
        let assigns = self.assignments.iter().map(|(x, t)| Program::assign(x.clone(), t.clone()));
        Program::sequence(test.into_iter().chain(assigns)).unwrap_or(Program::Test(Formula::True))
    }
}

/// Actions, their effects and admissibility guards, with a designated
/// always-admissible fallback.
#[derive(Debug, Clone, PartialEq)]
pub struct GuardTable {
    entries: Vec<GuardEntry>,
    fallback: String,
}

impl GuardTable {
    pub fn new(entries: Vec<GuardEntry>, fallback: impl Into<String>) -> ShieldResult<Self> {
        let fallback = fallback.into();
        for (i, e) in entries.iter().enumerate() {
            if entries[..i].iter().any(|o| o.action == e.action) {
                return Err(ShieldError::DuplicateAction(e.action.clone()));
            }
        }
        let fb = entries
            .iter()
            .find(|e| e.action == fallback)
            .ok_or_else(|| ShieldError::UnknownAction(fallback.clone()))?;
        if fb.guard != Formula::True {
            return Err(ShieldError::FallbackGuarded { action: fallback, guard: fb.guard.to_string() });
        }
        Ok(GuardTable { entries, fallback })
    }

    pub fn entries(&self) -> &[GuardEntry] {
        &self.entries
    }

    pub fn fallback(&self) -> &str {
        &self.fallback
    }

    /// Action ids in table order.
    pub fn actions(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.action.as_str())
    }

    pub fn entry(&self, action: &str) -> ShieldResult<&GuardEntry> {
        self.entries.iter().find(|e| e.action == action).ok_or_else(|| ShieldError::UnknownAction(action.to_string()))
    }

    pub fn guard(&self, action: &str) -> ShieldResult<&Formula> {
        Ok(&self.entry(action)?.guard)
    }

    /// Same actions and assignments with every guard rewritten by `f`.
    pub fn map_guards(&self, f: impl Fn(&Formula) -> Formula) -> ShieldResult<GuardTable> {
        let entries = self
            .entries
            .iter()
            .map(|e| GuardEntry { guard: f(&e.guard), ..e.clone() })
            .collect();
        GuardTable::new(entries, self.fallback.clone())
    }

    /// The controller as one nondeterministic choice over all entries.
    pub fn controller(&self) -> Program {
        let mut branches = self.entries.iter().rev().map(GuardEntry::to_program);
        let last = branches.next().expect("a table has at least its fallback entry");
        branches.fold(last, |acc, b| Program::choice(b, acc))
    }

    /// `.hp`-style text with `fallback:`, `actions:` and `controller:`
    /// sections, readable by [`GuardTable::from_hp`].
    pub fn to_hp(&self) -> String {
        let actions: Vec<&str> = self.actions().collect();
        let mut out = format!("fallback: {}\nactions: {}\ncontroller:\n", self.fallback, actions.join(", "));
        for (i, e) in self.entries.iter().enumerate() {
            let sep = if i == 0 { "   " } else { "++ " };
            out.push_str(&format!("  {sep}{{{}}}\n", e.to_program()));
        }
        out
    }

    pub fn from_hp(text: &str) -> ShieldResult<GuardTable> {
        let (blanked, sections) = split_sections(text, &["fallback", "actions", "controller"])?;
        let raw = |label: &str| -> Result<String, ParseError> {
            let s = find_section(&sections, label, text)?;
            Ok(blanked[s.content.start..s.content.end].trim().to_string())
        };
        let fallback = raw("fallback")?;
        let labels: Vec<String> = raw("actions")?.split(',').map(|s| s.trim().to_string()).collect();
        let ctrl = parse_section(&blanked, find_section(&sections, "controller", text)?, parse_program)?;
        let labels: Vec<&str> = labels.iter().map(String::as_str).collect();
        extract_guards(&ctrl, Some(&labels), &fallback)
    }
}

/// Builds a guard table from a controller in guarded-choice form: a choice
/// tree whose branches are sequences of tests and assignments. A test after
/// an assignment is moved in front of it by substitution, so each guard
/// speaks about the state before the action. Choices nested inside a branch
/// are distributed as long as no assignment precedes them.
pub fn extract_guards(ctrl: &Program, labels: Option<&[&str]>, fallback: &str) -> ShieldResult<GuardTable> {
    let mut branches = Vec::new();
    for b in ctrl.choice_branches() {
        branches.extend(expand_branch(b)?);
    }
    if let Some(labels) = labels {
        if labels.len() != branches.len() {
            return Err(ShieldError::LabelCount { labels: labels.len(), branches: branches.len() });
        }
    }
    let entries = branches
        .into_iter()
        .enumerate()
        .map(|(k, (guard, assignments))| {
            let action = labels.map(|l| l[k].to_string()).unwrap_or_else(|| format!("branch_{k}"));
            GuardEntry { action, assignments, guard }
        })
        .collect();
    GuardTable::new(entries, fallback)
}

type Branch = (Formula, Vec<(String, Term)>);

fn expand_branch(p: &Program) -> ShieldResult<Vec<Branch>> {
    // partial branches: tests so far, assignments so far, substitution
    let mut partial: Vec<(Vec<Formula>, Vec<(String, Term)>)> = vec![(Vec::new(), Vec::new())];
    for item in p.seq_items() {
        match item {
            Program::Test(f) => {
                for (tests, assigns) in &mut partial {
                    tests.push(preimage(f, assigns));
                }
            }
            Program::Assign(x, t) => {
                for (_, assigns) in &mut partial {
                    assigns.push((x.clone(), t.clone()));
                }
            }
            Program::Choice(..) => {
                if partial.iter().any(|(_, a)| !a.is_empty()) {
                    return Err(ShieldError::NotCanonicalForm(format!("choice after an assignment: {item}")));
                }
                let mut next = Vec::new();
                for (tests, _) in &partial {
                    for sub in item.choice_branches() {
                        for (g, a) in expand_branch(sub)? {
                            let mut t = tests.clone();
                            if g != Formula::True {
                                t.push(g);
                            }
                            next.push((t, a));
                        }
                    }
                }
                partial = next;
            }
            Program::Seq(..) => unreachable!("seq_items flattens sequences"),
            Program::AssignAny(_) | Program::Loop(_) | Program::Ode(_) => {
                return Err(ShieldError::NotCanonicalForm(item.to_string()));
            }
        }
    }
    Ok(partial
        .into_iter()
        .map(|(tests, assigns)| (Formula::conjunction(tests), assigns))
        .collect())
}

/// `f` after running `assigns`, expressed over the state before them.
fn preimage(f: &Formula, assigns: &[(String, Term)]) -> Formula {
    assigns.iter().rev().fold(f.clone(), |acc, (x, t)| {
        acc.substitute(&|name: &str| (name == x).then(|| t.clone()))
    })
}

/// A control loop `{ctrl; prelude; ode}*` split into its parts; `prelude`
/// holds the plant-side assignments (such as `t := 0`) before the ODE.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlLoop {
    pub ctrl: Program,
    pub prelude: Vec<(String, Term)>,
    pub ode: OdeSystem,
}

pub fn split_control_loop(p: &Program) -> ShieldResult<ControlLoop> {
    let body = match p {
        Program::Loop(b) => b.as_ref(),
        other => other,
    };
    let items = body.seq_items();
    let (Some(Program::Ode(ode)), Some(ctrl)) = (items.last(), items.first()) else {
        return Err(ShieldError::NotCanonicalForm(format!("expected `ctrl; ...; {{ode}}`, got {body}")));
    };
    if items.len() < 2 {
        return Err(ShieldError::NotCanonicalForm("control loop has no controller".into()));
    }
    let prelude = items[1..items.len() - 1]
        .iter()
        .map(|q| match q {
            Program::Assign(x, t) => Ok((x.clone(), t.clone())),
            other => Err(ShieldError::NotCanonicalForm(format!("only assignments may precede the ODE, got {other}"))),
        })
        .collect::<ShieldResult<_>>()?;
    Ok(ControlLoop { ctrl: (*ctrl).clone(), prelude, ode: ode.clone() })
}

/// Result of filtering one proposal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShieldDecision<'a> {
    pub action: &'a str,
    pub intervened: bool,
}

/// Lets `proposed` through when its guard holds with robustness at least
/// `margin`, otherwise substitutes the fallback.
pub fn shield_action<'a, S: Scalar>(
    gt: &'a GuardTable,
    s: &State<S>,
    proposed: &str,
    margin: S,
) -> ShieldResult<ShieldDecision<'a>> {
    let entry = gt.entry(proposed)?;
    let admissible = match &entry.guard {
        Formula::True => true,
        g => eval_formula(g, s)? && robustness(g, s)? >= margin,
    };
    Ok(if admissible {
        ShieldDecision { action: &entry.action, intervened: false }
    } else {
        ShieldDecision { action: gt.fallback(), intervened: true }
    })
}

/// Runs the action's assignments in order.
pub fn apply_action<S: Scalar>(gt: &GuardTable, s: &State<S>, action: &str) -> ShieldResult<State<S>> {
    let entry = gt.entry(action)?;
    let mut out = s.clone();
    for (x, t) in &entry.assignments {
        let v = eval_term(t, &out)?;
        out.set(x.clone(), v)?;
    }
    Ok(out)
}

/// Guard values of every action in `s`, keyed by action id.
pub fn admissible_actions<S: Scalar>(gt: &GuardTable, s: &State<S>, margin: S) -> ShieldResult<BTreeMap<String, bool>> {
    gt.entries()
        .iter()
        .map(|e| {
            let d = shield_action(gt, s, &e.action, margin)?;
            Ok((e.action.clone(), !d.intervened))
        })
        .collect()
}
