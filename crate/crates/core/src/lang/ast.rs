use std::collections::BTreeSet;
use std::fmt;

/// Polynomial real-arithmetic term.
#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Const(f64),
    Var(String),
    Neg(Box<Term>),
    Add(Box<Term>, Box<Term>),
    Sub(Box<Term>, Box<Term>),
    Mul(Box<Term>, Box<Term>),
    /// Exponent is always at least 1.
    Pow(Box<Term>, u32),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Self {
        Term::Var(name.into())
    }

    pub fn constant(c: f64) -> Self {
        Term::Const(c)
    }

    pub fn neg(t: Term) -> Self {
        Term::Neg(Box::new(t))
    }

    pub fn add(l: Term, r: Term) -> Self {
        Term::Add(Box::new(l), Box::new(r))
    }

    pub fn sub(l: Term, r: Term) -> Self {
        Term::Sub(Box::new(l), Box::new(r))
    }

    pub fn mul(l: Term, r: Term) -> Self {
        Term::Mul(Box::new(l), Box::new(r))
    }

    pub fn pow(base: Term, exp: u32) -> Self {
        assert!(exp >= 1, "exponent must be at least 1");
        Term::Pow(Box::new(base), exp)
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Term::Const(_) => {}
            Term::Var(v) => {
                out.insert(v.clone());
            }
            Term::Neg(t) | Term::Pow(t, _) => t.collect_vars(out),
            Term::Add(l, r) | Term::Sub(l, r) | Term::Mul(l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    /// Replaces every occurrence of the variables in `subst` by the mapped term.
    pub fn substitute(&self, subst: &dyn Fn(&str) -> Option<Term>) -> Term {
        match self {
            Term::Const(c) => Term::Const(*c),
            Term::Var(v) => subst(v).unwrap_or_else(|| Term::Var(v.clone())),
            Term::Neg(t) => Term::neg(t.substitute(subst)),
            Term::Add(l, r) => Term::add(l.substitute(subst), r.substitute(subst)),
            Term::Sub(l, r) => Term::sub(l.substitute(subst), r.substitute(subst)),
            Term::Mul(l, r) => Term::mul(l.substitute(subst), r.substitute(subst)),
            Term::Pow(b, e) => Term::Pow(Box::new(b.substitute(subst)), *e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Le,
    Lt,
    Eq,
    Gt,
    Ge,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Lt => "<",
            Relation::Eq => "=",
            Relation::Gt => ">",
            Relation::Ge => ">=",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Differential dynamic logic formula.
#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    True,
    False,
    Cmp(Term, Relation, Term),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Forall(String, Box<Formula>),
    Exists(String, Box<Formula>),
    Box(Box<Program>, Box<Formula>),
}

impl Formula {
    pub fn cmp(l: Term, rel: Relation, r: Term) -> Self {
        Formula::Cmp(l, rel, r)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(l: Formula, r: Formula) -> Self {
        Formula::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: Formula, r: Formula) -> Self {
        Formula::Or(Box::new(l), Box::new(r))
    }

    pub fn implies(l: Formula, r: Formula) -> Self {
        Formula::Implies(Box::new(l), Box::new(r))
    }

    pub fn boxed(p: Program, f: Formula) -> Self {
        Formula::Box(Box::new(p), Box::new(f))
    }

    /// Left-nested conjunction; `True` for an empty list.
    pub fn conjunction(parts: impl IntoIterator<Item = Formula>) -> Formula {
        let mut iter = parts.into_iter();
        match iter.next() {
            None => Formula::True,
            Some(first) => iter.fold(first, Formula::and),
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Cmp(l, _, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
            Formula::Not(f) => f.collect_vars(out),
            Formula::And(l, r) | Formula::Or(l, r) | Formula::Implies(l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
            Formula::Forall(v, f) | Formula::Exists(v, f) => {
                out.insert(v.clone());
                f.collect_vars(out);
            }
            Formula::Box(p, f) => {
                p.collect_vars(out);
                f.collect_vars(out);
            }
        }
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    /// Substitutes terms for free variables. Bound variables of quantifiers
    /// shadow the substitution; programs under a box are substituted as well.
    pub fn substitute(&self, subst: &dyn Fn(&str) -> Option<Term>) -> Formula {
        match self {
            Formula::True => Formula::True,
            Formula::False => Formula::False,
            Formula::Cmp(l, rel, r) => Formula::Cmp(l.substitute(subst), *rel, r.substitute(subst)),
            Formula::Not(f) => Formula::not(f.substitute(subst)),
            Formula::And(l, r) => Formula::and(l.substitute(subst), r.substitute(subst)),
            Formula::Or(l, r) => Formula::or(l.substitute(subst), r.substitute(subst)),
            Formula::Implies(l, r) => Formula::implies(l.substitute(subst), r.substitute(subst)),
            Formula::Forall(v, f) | Formula::Exists(v, f) => {
                let bound = v.clone();
                let inner = move |name: &str| if name == bound { None } else { subst(name) };
                let body = Box::new(f.substitute(&inner));
                match self {
                    Formula::Forall(..) => Formula::Forall(v.clone(), body),
                    _ => Formula::Exists(v.clone(), body),
                }
            }
            Formula::Box(p, f) => Formula::boxed(p.substitute(subst), f.substitute(subst)),
        }
    }
}

/// System of ODEs `{x1' = t1, ..., xn' = tn & domain}`.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeSystem {
    pub equations: Vec<(String, Term)>,
    pub domain: Formula,
}

impl OdeSystem {
    pub fn new(equations: Vec<(String, Term)>, domain: Formula) -> Self {
        OdeSystem { equations, domain }
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.equations.iter().map(|(v, _)| v.as_str())
    }
}

/// Hybrid program.
#[derive(Debug, Clone, PartialEq)]
pub enum Program {
    Assign(String, Term),
    AssignAny(String),
    Test(Formula),
    Seq(Box<Program>, Box<Program>),
    Choice(Box<Program>, Box<Program>),
    Loop(Box<Program>),
    Ode(OdeSystem),
}

impl Program {
    pub fn assign(var: impl Into<String>, t: Term) -> Self {
        Program::Assign(var.into(), t)
    }

    pub fn seq(a: Program, b: Program) -> Self {
        Program::Seq(Box::new(a), Box::new(b))
    }

    pub fn choice(a: Program, b: Program) -> Self {
        Program::Choice(Box::new(a), Box::new(b))
    }

    pub fn looped(body: Program) -> Self {
        Program::Loop(Box::new(body))
    }

    /// Left-nested sequential composition of a nonempty list.
    pub fn sequence(parts: impl IntoIterator<Item = Program>) -> Option<Program> {
        let mut iter = parts.into_iter();
        let first = iter.next()?;
        Some(iter.fold(first, Program::seq))
    }

    /// Flattens nested `Seq` nodes into program order.
    pub fn seq_items(&self) -> Vec<&Program> {
        let mut out = Vec::new();
        fn walk<'a>(p: &'a Program, out: &mut Vec<&'a Program>) {
            match p {
                Program::Seq(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                other => out.push(other),
            }
        }
        walk(self, &mut out);
        out
    }

    /// Flattens nested `Choice` nodes into branch order.
    pub fn choice_branches(&self) -> Vec<&Program> {
        let mut out = Vec::new();
        fn walk<'a>(p: &'a Program, out: &mut Vec<&'a Program>) {
            match p {
                Program::Choice(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                other => out.push(other),
            }
        }
        walk(self, &mut out);
        out
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Program::Assign(v, t) => {
                out.insert(v.clone());
                t.collect_vars(out);
            }
            Program::AssignAny(v) => {
                out.insert(v.clone());
            }
            Program::Test(f) => f.collect_vars(out),
            Program::Seq(a, b) | Program::Choice(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Program::Loop(body) => body.collect_vars(out),
            Program::Ode(ode) => {
                for (v, t) in &ode.equations {
                    out.insert(v.clone());
                    t.collect_vars(out);
                }
                ode.domain.collect_vars(out);
            }
        }
    }

    pub fn substitute(&self, subst: &dyn Fn(&str) -> Option<Term>) -> Program {
        match self {
            Program::Assign(v, t) => Program::Assign(v.clone(), t.substitute(subst)),
            Program::AssignAny(v) => Program::AssignAny(v.clone()),
            Program::Test(f) => Program::Test(f.substitute(subst)),
            Program::Seq(a, b) => Program::seq(a.substitute(subst), b.substitute(subst)),
            Program::Choice(a, b) => Program::choice(a.substitute(subst), b.substitute(subst)),
            Program::Loop(body) => Program::looped(body.substitute(subst)),
            Program::Ode(ode) => Program::Ode(OdeSystem {
                equations: ode
                    .equations
                    .iter()
                    .map(|(v, t)| (v.clone(), t.substitute(subst)))
                    .collect(),
                domain: ode.domain.substitute(subst),
            }),
        }
    }

    /// Number of AST nodes of each kind, used by structural tests.
    pub fn count(&self, pred: &dyn Fn(&Program) -> bool) -> usize {
        let own = usize::from(pred(self));
        own + match self {
            Program::Seq(a, b) | Program::Choice(a, b) => a.count(pred) + b.count(pred),
            Program::Loop(body) => body.count(pred),
            _ => 0,
        }
    }
}

pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_') && !is_keyword(name)
}

pub(crate) fn is_keyword(name: &str) -> bool {
    matches!(name, "true" | "false" | "forall" | "exists")
}
