//! Slot-indexed compiled forms of terms and formulas. Values live in a flat
//! slice laid out by a [`Layout`]; a NaN slot means "unbound".

use std::collections::HashMap;
use std::sync::Arc;

use super::error::{ExecError, ExecResult};
use super::eval::{compare, pow_exponent};
use super::state::State;
use crate::lang::{Formula, Relation, Term};
use crate::scalar::Scalar;

/// Variable-name to slot mapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    names: Arc<[String]>,
    index: HashMap<String, usize>,
}

impl Layout {
    pub fn new<I, N>(names: I) -> Self
    where
        I: IntoIterator<Item = N>,
        N: Into<String>,
    {
        let mut list: Vec<String> = names.into_iter().map(Into::into).collect();
        list.sort();
        list.dedup();
        let index = list.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Layout { names: list.into(), index }
    }

    pub fn slot(&self, var: &str) -> Option<usize> {
        self.index.get(var).copied()
    }

    pub fn name(&self, slot: usize) -> &str {
        &self.names[slot]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Values of `state` in slot order; variables missing from the state are NaN.
    pub fn pack<S: Scalar>(&self, state: &State<S>) -> Vec<S> {
        self.names.iter().map(|n| state.get(n).unwrap_or_else(S::nan)).collect()
    }

    /// Writes bound slots back into a state.
    pub fn unpack_into<S: Scalar>(&self, values: &[S], state: &mut State<S>) -> ExecResult<()> {
        for (name, v) in self.names.iter().zip(values) {
            if !v.is_nan() {
                state.set(name.clone(), *v)?;
            }
        }
        Ok(())
    }

    pub fn unpack<S: Scalar>(&self, values: &[S]) -> ExecResult<State<S>> {
        let mut s = State::new();
        self.unpack_into(values, &mut s)?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op<S> {
    Push(S),
    Load(usize),
    Neg,
    Add,
    Sub,
    Mul,
    Pow(i32),
}

/// Postfix bytecode for a term.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledTerm<S> {
    ops: Vec<Op<S>>,
    depth: usize,
}

impl<S: Scalar> CompiledTerm<S> {
    pub fn compile(t: &Term, layout: &Layout) -> ExecResult<Self> {
        let mut ops = Vec::new();
        let depth = emit(t, layout, &mut ops)?;
        Ok(CompiledTerm { ops, depth })
    }

    /// Evaluates against slot values. Reading an unbound (NaN) slot is an error.
    pub fn eval(&self, vals: &[S], layout: &Layout) -> ExecResult<S> {
        let mut stack = [S::zero(); 16];
        let mut heap;
        let stack: &mut [S] = if self.depth <= stack.len() {
            &mut stack
        } else {
            heap = vec![S::zero(); self.depth];
            &mut heap
        };
        let mut sp = 0;
        for op in &self.ops {
            match *op {
                Op::Push(c) => {
                    stack[sp] = c;
                    sp += 1;
                }
                Op::Load(slot) => {
                    let v = vals[slot];
                    if v.is_nan() {
                        return Err(ExecError::UnboundVariable(layout.name(slot).to_string()));
                    }
                    stack[sp] = v;
                    sp += 1;
                }
                Op::Neg => stack[sp - 1] = -stack[sp - 1],
                Op::Pow(e) => stack[sp - 1] = stack[sp - 1].powi(e),
                Op::Add | Op::Sub | Op::Mul => {
                    sp -= 1;
                    let (a, b) = (stack[sp - 1], stack[sp]);
                    stack[sp - 1] = match op {
                        Op::Add => a + b,
                        Op::Sub => a - b,
                        _ => a * b,
                    };
                }
            }
        }
        let v = stack[0];
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExecError::NonFiniteResult)
        }
    }
}

fn emit<S: Scalar>(t: &Term, layout: &Layout, ops: &mut Vec<Op<S>>) -> ExecResult<usize> {
    Ok(match t {
        Term::Const(c) => {
            ops.push(Op::Push(S::lit(*c)));
            1
        }
        Term::Var(v) => {
            let slot = layout.slot(v).ok_or_else(|| ExecError::UnboundVariable(v.clone()))?;
            ops.push(Op::Load(slot));
            1
        }
        Term::Neg(x) => {
            let d = emit(x, layout, ops)?;
            ops.push(Op::Neg);
            d
        }
        Term::Pow(b, e) => {
            let d = emit(b, layout, ops)?;
            ops.push(Op::Pow(pow_exponent(*e)));
            d
        }
        Term::Add(l, r) | Term::Sub(l, r) | Term::Mul(l, r) => {
            let dl = emit(l, layout, ops)?;
            let dr = emit(r, layout, ops)?;
            ops.push(match t {
                Term::Add(..) => Op::Add,
                Term::Sub(..) => Op::Sub,
                _ => Op::Mul,
            });
            dl.max(dr + 1)
        }
    })
}

/// Quantifier-free formula over slots.
#[derive(Debug, Clone, PartialEq)]
pub enum CompiledFormula<S> {
    True,
    False,
    Cmp(CompiledTerm<S>, Relation, CompiledTerm<S>),
    Not(Box<CompiledFormula<S>>),
    And(Box<CompiledFormula<S>>, Box<CompiledFormula<S>>),
    Or(Box<CompiledFormula<S>>, Box<CompiledFormula<S>>),
    Implies(Box<CompiledFormula<S>>, Box<CompiledFormula<S>>),
}

impl<S: Scalar> CompiledFormula<S> {
    pub fn compile(f: &Formula, layout: &Layout) -> ExecResult<Self> {
        let bin = |l: &Formula, r: &Formula| -> ExecResult<_> {
            Ok((Box::new(Self::compile(l, layout)?), Box::new(Self::compile(r, layout)?)))
        };
        Ok(match f {
            Formula::True => CompiledFormula::True,
            Formula::False => CompiledFormula::False,
            Formula::Cmp(l, rel, r) => CompiledFormula::Cmp(
                CompiledTerm::compile(l, layout)?,
                *rel,
                CompiledTerm::compile(r, layout)?,
            ),
            Formula::Not(g) => CompiledFormula::Not(Box::new(Self::compile(g, layout)?)),
            Formula::And(l, r) => {
                let (l, r) = bin(l, r)?;
                CompiledFormula::And(l, r)
            }
            Formula::Or(l, r) => {
                let (l, r) = bin(l, r)?;
                CompiledFormula::Or(l, r)
            }
            Formula::Implies(l, r) => {
                let (l, r) = bin(l, r)?;
                CompiledFormula::Implies(l, r)
            }
            Formula::Forall(..) => return Err(ExecError::UnsupportedConnective("forall")),
            Formula::Exists(..) => return Err(ExecError::UnsupportedConnective("exists")),
            Formula::Box(..) => return Err(ExecError::UnsupportedConnective("[program]")),
        })
    }

    pub fn eval(&self, vals: &[S], layout: &Layout) -> ExecResult<bool> {
        Ok(match self {
            CompiledFormula::True => true,
            CompiledFormula::False => false,
            CompiledFormula::Cmp(l, rel, r) => compare(l.eval(vals, layout)?, *rel, r.eval(vals, layout)?),
            CompiledFormula::Not(g) => !g.eval(vals, layout)?,
            CompiledFormula::And(l, r) => l.eval(vals, layout)? && r.eval(vals, layout)?,
            CompiledFormula::Or(l, r) => l.eval(vals, layout)? || r.eval(vals, layout)?,
            CompiledFormula::Implies(l, r) => !l.eval(vals, layout)? || r.eval(vals, layout)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::{eval_formula, eval_term};
    use crate::lang::{parse_formula, parse_term};

    #[test]
    fn compiled_terms_agree_with_the_interpreter() {
        let s = State::from_pairs([("x", 1.5), ("v", -2.0), ("b", 0.5)]);
        let layout = Layout::new(s.vars());
        let vals = layout.pack(&s);
        for src in ["x", "-x^3 + 2*v*(b - x)", "(x - v)^2 - -3", "x * (v * (b * (x * (v + 1))))"] {
            let t = parse_term(src).unwrap();
            let c = CompiledTerm::<f64>::compile(&t, &layout).unwrap();
            assert_eq!(c.eval(&vals, &layout).unwrap(), eval_term(&t, &s).unwrap(), "{src}");
        }
        let f = parse_formula("x >= v & !(b = 0.5) | x^2 > 2").unwrap();
        let c = CompiledFormula::<f64>::compile(&f, &layout).unwrap();
        assert_eq!(c.eval(&vals, &layout).unwrap(), eval_formula(&f, &s).unwrap());
    }

    #[test]
    fn unbound_slots_are_reported_by_name() {
        let layout = Layout::new(["x", "y"]);
        let c = CompiledTerm::<f64>::compile(&parse_term("x + y").unwrap(), &layout).unwrap();
        let vals = layout.pack(&State::from_pairs([("x", 1.0)]));
        assert_eq!(c.eval(&vals, &layout), Err(ExecError::UnboundVariable("y".into())));
        assert!(CompiledTerm::<f64>::compile(&parse_term("z").unwrap(), &layout).is_err());
    }

    #[test]
    fn deep_terms_fall_back_to_a_heap_stack() {
        let mut src = String::from("1");
        for _ in 0..40 {
            src = format!("1 + ({src})");
        }
        let t = parse_term(&src).unwrap();
        let layout = Layout::new(Vec::<String>::new());
        let c = CompiledTerm::<f64>::compile(&t, &layout).unwrap();
        assert_eq!(c.eval(&[], &layout).unwrap(), 41.0);
    }
}
