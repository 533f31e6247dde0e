//! Printer producing the concrete syntax accepted by the parser. Output is
//! minimally parenthesised and reparses to a structurally equal tree.

use std::fmt::{self, Write};

use super::ast::{Formula, OdeSystem, Program, Term};

pub fn print_program(p: &Program) -> String {
    p.to_string()
}

pub fn print_formula(f: &Formula) -> String {
    f.to_string()
}

pub fn print_term(t: &Term) -> String {
    t.to_string()
}

fn term_prec(t: &Term) -> u8 {
    match t {
        Term::Add(..) | Term::Sub(..) => 1,
        Term::Mul(..) => 2,
        Term::Neg(_) => 3,
        Term::Const(c) if c.is_sign_negative() => 3,
        Term::Pow(..) => 4,
        Term::Const(_) | Term::Var(_) => 5,
    }
}

fn write_term(out: &mut impl Write, t: &Term, min: u8) -> fmt::Result {
    let paren = term_prec(t) < min;
    if paren {
        out.write_char('(')?;
    }
    match t {
        Term::Const(c) => write!(out, "{c}")?,
        Term::Var(v) => out.write_str(v)?,
        Term::Neg(inner) => {
            out.write_char('-')?;
            // `-3` would read back as a literal, so constants keep parentheses
            let min = if matches!(**inner, Term::Const(_)) { 6 } else { 3 };
            write_term(out, inner, min)?;
        }
        Term::Add(l, r) | Term::Sub(l, r) => {
            write_term(out, l, 1)?;
            out.write_str(if matches!(t, Term::Add(..)) { " + " } else { " - " })?;
            write_term(out, r, 2)?;
        }
        Term::Mul(l, r) => {
            write_term(out, l, 2)?;
            out.write_str(" * ")?;
            write_term(out, r, 3)?;
        }
        Term::Pow(base, exp) => {
            write_term(out, base, 5)?;
            write!(out, "^{exp}")?;
        }
    }
    if paren {
        out.write_char(')')?;
    }
    Ok(())
}

fn formula_prec(f: &Formula) -> u8 {
    match f {
        Formula::Implies(..) => 1,
        Formula::Or(..) => 2,
        Formula::And(..) => 3,
        Formula::Not(_) | Formula::Forall(..) | Formula::Exists(..) | Formula::Box(..) => 4,
        Formula::True | Formula::False | Formula::Cmp(..) => 5,
    }
}

fn write_formula(out: &mut impl Write, f: &Formula, min: u8) -> fmt::Result {
    let paren = formula_prec(f) < min;
    if paren {
        out.write_char('(')?;
    }
    match f {
        Formula::True => out.write_str("true")?,
        Formula::False => out.write_str("false")?,
        Formula::Cmp(l, rel, r) => {
            write_term(out, l, 1)?;
            write!(out, " {rel} ")?;
            write_term(out, r, 1)?;
        }
        Formula::Not(inner) => {
            out.write_char('!')?;
            write_formula(out, inner, 4)?;
        }
        Formula::And(l, r) => {
            write_formula(out, l, 3)?;
            out.write_str(" & ")?;
            write_formula(out, r, 4)?;
        }
        Formula::Or(l, r) => {
            write_formula(out, l, 2)?;
            out.write_str(" | ")?;
            write_formula(out, r, 3)?;
        }
        Formula::Implies(l, r) => {
            write_formula(out, l, 2)?;
            out.write_str(" -> ")?;
            write_formula(out, r, 1)?;
        }
        Formula::Forall(v, body) | Formula::Exists(v, body) => {
            let kw = if matches!(f, Formula::Forall(..)) { "forall" } else { "exists" };
            write!(out, "{kw} {v}. ")?;
            write_formula(out, body, 4)?;
        }
        Formula::Box(p, body) => {
            out.write_char('[')?;
            write_program(out, p, 1)?;
            out.write_str("] ")?;
            write_formula(out, body, 4)?;
        }
    }
    if paren {
        out.write_char(')')?;
    }
    Ok(())
}

fn program_prec(p: &Program) -> u8 {
    match p {
        Program::Choice(..) => 1,
        Program::Seq(..) => 2,
        _ => 3,
    }
}

fn write_ode(out: &mut impl Write, ode: &OdeSystem) -> fmt::Result {
    out.write_char('{')?;
    for (i, (var, rhs)) in ode.equations.iter().enumerate() {
        if i > 0 {
            out.write_str(", ")?;
        }
        write!(out, "{var}' = ")?;
        write_term(out, rhs, 1)?;
    }
    if ode.domain != Formula::True {
        out.write_str(" & ")?;
        write_formula(out, &ode.domain, 1)?;
    }
    out.write_char('}')
}

fn write_program(out: &mut impl Write, p: &Program, min: u8) -> fmt::Result {
    let brace = program_prec(p) < min;
    if brace {
        out.write_char('{')?;
    }
    match p {
        Program::Assign(v, t) => {
            write!(out, "{v} := ")?;
            write_term(out, t, 1)?;
        }
        Program::AssignAny(v) => write!(out, "{v} := *")?,
        Program::Test(f) => {
            out.write_char('?')?;
            write_formula(out, f, 1)?;
        }
        Program::Seq(a, b) => {
            write_program(out, a, 2)?;
            out.write_str("; ")?;
            write_program(out, b, 3)?;
        }
        Program::Choice(a, b) => {
            write_program(out, a, 1)?;
            out.write_str(" ++ ")?;
            write_program(out, b, 2)?;
        }
        Program::Loop(body) => {
            out.write_char('{')?;
            write_program(out, body, 1)?;
            out.write_str("}*")?;
        }
        Program::Ode(ode) => write_ode(out, ode)?,
    }
    if brace {
        out.write_char('}')?;
    }
    Ok(())
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_term(f, self, 0)
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_formula(f, self, 0)
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_program(f, self, 0)
    }
}
