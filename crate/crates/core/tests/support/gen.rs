//! Random syntax trees for print/parse round trips.

use proptest::prelude::*;

use hybrid_shield::lang::{Formula, OdeSystem, Program, Relation, Term};

const VARS: [&str; 6] = ["x", "y", "v", "a", "t1", "b_2"];

fn var() -> impl Strategy<Value = String> {
    proptest::sample::select(&VARS[..]).prop_map(str::to_string)
}

fn constant() -> impl Strategy<Value = f64> {
    prop_oneof![
        (-20i32..20).prop_map(f64::from),
        (-1e6f64..1e6),
        any::<f64>().prop_filter("finite", |c| c.is_finite()),
    ]
}

fn relation() -> impl Strategy<Value = Relation> {
    proptest::sample::select(vec![Relation::Le, Relation::Lt, Relation::Eq, Relation::Gt, Relation::Ge])
}

/// Terms, formulas and programs whose trees are at most `depth` levels
/// deep, built bottom-up so each level reuses the strategies below it.
pub fn trees(depth: usize) -> (BoxedStrategy<Term>, BoxedStrategy<Formula>, BoxedStrategy<Program>) {
    let mut t: BoxedStrategy<Term> =
        prop_oneof![constant().prop_map(Term::Const), var().prop_map(Term::Var)].boxed();
    let mut f: BoxedStrategy<Formula> = prop_oneof![Just(Formula::True), Just(Formula::False)].boxed();
    let mut p: BoxedStrategy<Program> = prop_oneof![
        (var(), constant()).prop_map(|(x, c)| Program::Assign(x, Term::Const(c))),
        var().prop_map(Program::AssignAny),
        Just(Program::Test(Formula::True)),
    ]
    .boxed();
    for _ in 1..depth {
        let (t0, f0, p0) = (t.clone(), f.clone(), p.clone());
        let t1 = prop_oneof![
            2 => t0.clone(),
            1 => t0.clone().prop_map(Term::neg),
            1 => (t0.clone(), t0.clone()).prop_map(|(l, r)| Term::add(l, r)),
            1 => (t0.clone(), t0.clone()).prop_map(|(l, r)| Term::sub(l, r)),
            1 => (t0.clone(), t0.clone()).prop_map(|(l, r)| Term::mul(l, r)),
            1 => (t0.clone(), 1u32..5).prop_map(|(b, e)| Term::pow(b, e)),
        ]
        .boxed();
        let f1 = prop_oneof![
            1 => f0.clone(),
            2 => (t0.clone(), relation(), t0.clone()).prop_map(|(l, r, rr)| Formula::cmp(l, r, rr)),
            1 => f0.clone().prop_map(Formula::not),
            1 => (f0.clone(), f0.clone()).prop_map(|(l, r)| Formula::and(l, r)),
            1 => (f0.clone(), f0.clone()).prop_map(|(l, r)| Formula::or(l, r)),
            1 => (f0.clone(), f0.clone()).prop_map(|(l, r)| Formula::implies(l, r)),
            1 => (var(), f0.clone()).prop_map(|(x, b)| Formula::Forall(x, Box::new(b))),
            1 => (var(), f0.clone()).prop_map(|(x, b)| Formula::Exists(x, Box::new(b))),
            1 => (p0.clone(), f0.clone()).prop_map(|(a, b)| Formula::boxed(a, b)),
        ]
        .boxed();
        let ode = (proptest::sample::subsequence(&VARS[..], 1..=3), proptest::collection::vec(t0.clone(), 3), f0.clone())
            .prop_map(|(xs, ts, dom)| {
                let eqs = xs.iter().zip(ts).map(|(x, t)| (x.to_string(), t)).collect();
                Program::Ode(OdeSystem::new(eqs, dom))
            });
        let p1 = prop_oneof![
            1 => p0.clone(),
            1 => (var(), t0.clone()).prop_map(|(x, t)| Program::assign(x, t)),
            1 => f0.clone().prop_map(Program::Test),
            1 => ode,
            1 => (p0.clone(), p0.clone()).prop_map(|(a, b)| Program::seq(a, b)),
            1 => (p0.clone(), p0.clone()).prop_map(|(a, b)| Program::choice(a, b)),
            1 => p0.clone().prop_map(Program::looped),
        ]
        .boxed();
        (t, f, p) = (t1, f1, p1);
    }
    (t, f, p)
}
