use super::error::{ExecError, ExecResult};
use super::state::State;
use crate::lang::{Formula, Relation, Term};
use crate::scalar::Scalar;

pub fn eval_term<S: Scalar>(t: &Term, s: &State<S>) -> ExecResult<S> {
    let v = eval_raw(t, s)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ExecError::NonFiniteResult)
    }
}

fn eval_raw<S: Scalar>(t: &Term, s: &State<S>) -> ExecResult<S> {
    Ok(match t {
        Term::Const(c) => S::lit(*c),
        Term::Var(v) => s.value(v)?,
        Term::Neg(x) => -eval_raw(x, s)?,
        Term::Add(l, r) => eval_raw(l, s)? + eval_raw(r, s)?,
        Term::Sub(l, r) => eval_raw(l, s)? - eval_raw(r, s)?,
        Term::Mul(l, r) => eval_raw(l, s)? * eval_raw(r, s)?,
        Term::Pow(b, e) => eval_raw(b, s)?.powi(pow_exponent(*e)),
    })
}

pub(crate) fn pow_exponent(e: u32) -> i32 {
    i32::try_from(e).unwrap_or(i32::MAX)
}

pub(crate) fn compare<S: Scalar>(l: S, rel: Relation, r: S) -> bool {
    match rel {
        Relation::Le => l <= r,
        Relation::Lt => l < r,
        Relation::Eq => l == r,
        Relation::Gt => l > r,
        Relation::Ge => l >= r,
    }
}

/// Truth value in `s`, with exact IEEE comparisons.
pub fn eval_formula<S: Scalar>(f: &Formula, s: &State<S>) -> ExecResult<bool> {
    Ok(match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Cmp(l, rel, r) => compare(eval_term(l, s)?, *rel, eval_term(r, s)?),
        Formula::Not(g) => !eval_formula(g, s)?,
        Formula::And(l, r) => eval_formula(l, s)? && eval_formula(r, s)?,
        Formula::Or(l, r) => eval_formula(l, s)? || eval_formula(r, s)?,
        Formula::Implies(l, r) => !eval_formula(l, s)? || eval_formula(r, s)?,
        Formula::Forall(..) => return Err(ExecError::UnsupportedConnective("forall")),
        Formula::Exists(..) => return Err(ExecError::UnsupportedConnective("exists")),
        Formula::Box(..) => return Err(ExecError::UnsupportedConnective("[program]")),
    })
}

/// Signed satisfaction margin: `g - f` for `f <= g` atoms (and the mirrored
/// forms), `-|f - g|` for equalities, `min` over conjunctions and `max` over
/// disjunctions. Negation flips the sign, which is the same as pushing it to
/// the atoms. Positive margins imply truth; a zero margin is a boundary.
pub fn robustness<S: Scalar>(f: &Formula, s: &State<S>) -> ExecResult<S> {
    Ok(match f {
        Formula::True => S::infinity(),
        Formula::False => S::neg_infinity(),
        Formula::Cmp(l, rel, r) => {
            let (l, r) = (eval_term(l, s)?, eval_term(r, s)?);
            match rel {
                Relation::Le | Relation::Lt => r - l,
                Relation::Ge | Relation::Gt => l - r,
                Relation::Eq => -(l - r).abs(),
            }
        }
        Formula::Not(g) => -robustness(g, s)?,
        Formula::And(l, r) => robustness(l, s)?.min(robustness(r, s)?),
        Formula::Or(l, r) => robustness(l, s)?.max(robustness(r, s)?),
        Formula::Implies(l, r) => (-robustness(l, s)?).max(robustness(r, s)?),
        Formula::Forall(..) => return Err(ExecError::UnsupportedConnective("forall")),
        Formula::Exists(..) => return Err(ExecError::UnsupportedConnective("exists")),
        Formula::Box(..) => return Err(ExecError::UnsupportedConnective("[program]")),
    })
}
