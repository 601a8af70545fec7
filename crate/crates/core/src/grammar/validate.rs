use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::*;
use crate::expr::AGE;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DiagnosticKind {
    /// A propensity, parameter or ODE right-hand side reads an unbound name.
    UnboundVariable(String),
    /// A right-hand-side template reads a name that is neither bound by the
    /// pattern nor drawn in a `choosing` clause.
    UnboundFresh(String),
    FreshInPropensity(String),
    AgeOutsidePropensity,
    /// A fresh variable shadows a pattern variable, `age`, or another draw.
    DuplicateBinding(String),
    BadDerivativeTarget(String),
    DuplicateDerivative(String),
    /// A continuous rule must restate its pattern, adding `dX` to targets.
    ContinuousShape(String),
    /// A literal or repeated-variable test on a slot that an ODE changes.
    ConstraintOnContinuousSlot(String),
    DuplicateRule(String),
    VectorDrawFromDiscrete(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub rule: String,
    pub span: Span,
}

impl fmt::Display for DiagnosticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use DiagnosticKind::*;
        match self {
            UnboundVariable(v) => write!(f, "unbound variable `{v}`"),
            UnboundFresh(v) => write!(f, "`{v}` is not bound by the pattern and has no `choosing` clause"),
            FreshInPropensity(v) => write!(f, "propensity reads fresh variable `{v}`"),
            AgeOutsidePropensity => write!(f, "`age` may only appear in jump propensities"),
            DuplicateBinding(v) => write!(f, "fresh variable `{v}` is already bound"),
            BadDerivativeTarget(v) => write!(f, "derivative target `{v}` is not a real-valued pattern variable"),
            DuplicateDerivative(v) => write!(f, "`{v}` has more than one derivative in this rule"),
            ContinuousShape(m) => write!(f, "continuous rule must not create or destroy terms: {m}"),
            ConstraintOnContinuousSlot(m) => write!(f, "{m}"),
            DuplicateRule(n) => write!(f, "duplicate rule name `{n}`"),
            VectorDrawFromDiscrete(v) => write!(f, "vector draw `{v}` needs a continuous family"),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: rule `{}`: {}", self.span.line, self.span.col, self.rule, self.kind)
    }
}

/// Well-formedness diagnostics; empty means the grammar can be compiled and
/// simulated.
pub fn validate(g: &Grammar) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut names = BTreeSet::new();
    for r in &g.rules {
        let mut push = |kind| {
            out.push(Diagnostic { kind, rule: r.name.clone(), span: r.span });
        };
        if !names.insert(r.name.as_str()) {
            push(DiagnosticKind::DuplicateRule(r.name.clone()));
        }
        let bound: BTreeSet<&str> = r.lhs_vars().into_iter().collect();
        match &r.body {
            RuleBody::Jump(j) => check_jump(r, j, &bound, &mut push),
            RuleBody::Continuous(c) => check_continuous(g, r, c, &bound, &mut push),
        }
    }
    check_continuous_slots(g, &mut out);
    out
}

fn vars_of(e: &Expr) -> Vec<&str> {
    let mut v = Vec::new();
    e.for_each_var(&mut |n| {
        if !v.contains(&n) {
            v.push(n)
        }
    });
    v
}

fn check_jump(r: &Rule, j: &JumpBody, bound: &BTreeSet<&str>, push: &mut impl FnMut(DiagnosticKind)) {
    let fresh: Vec<&str> = j.fresh.iter().map(|f| f.name.as_str()).collect();
    let mut seen_age_misuse = false;
    let mut age_misuse = |push: &mut dyn FnMut(DiagnosticKind)| {
        if !seen_age_misuse {
            seen_age_misuse = true;
            push(DiagnosticKind::AgeOutsidePropensity);
        }
    };

    for v in vars_of(&j.propensity) {
        if v == AGE || bound.contains(v) {
            continue;
        }
        if fresh.contains(&v) {
            push(DiagnosticKind::FreshInPropensity(v.into()));
        } else {
            push(DiagnosticKind::UnboundVariable(v.into()));
        }
    }

    let mut available: BTreeSet<&str> = bound.clone();
    for f in &j.fresh {
        for p in &f.dist.params {
            for v in vars_of(p) {
                if v == AGE {
                    age_misuse(push);
                } else if !available.contains(v) {
                    push(DiagnosticKind::UnboundVariable(v.into()));
                }
            }
        }
        if f.name == AGE || !available.insert(f.name.as_str()) {
            push(DiagnosticKind::DuplicateBinding(f.name.clone()));
        }
        if f.vector && f.dist.family.is_discrete() {
            push(DiagnosticKind::VectorDrawFromDiscrete(f.name.clone()));
        }
    }

    let mut reported = BTreeSet::new();
    for t in &r.rhs {
        for e in &t.slots {
            for v in vars_of(e) {
                if v == AGE {
                    age_misuse(push);
                } else if !available.contains(v) && reported.insert(v) {
                    push(DiagnosticKind::UnboundFresh(v.into()));
                }
            }
        }
    }
}

/// The slot sort a pattern variable occupies (first occurrence).
fn var_sort(g: &Grammar, r: &Rule, var: &str) -> Option<Sort> {
    for p in &r.lhs {
        let decl = g.species(&p.species)?;
        for (s, d) in p.slots.iter().zip(&decl.slots) {
            if matches!(s, SlotPattern::Var(v) if v == var) {
                return Some(d.sort);
            }
        }
    }
    None
}

fn pattern_expr(s: &SlotPattern) -> Expr {
    match s {
        SlotPattern::Var(v) => Expr::Var(v.clone()),
        SlotPattern::Const(c) => Expr::Const(c.clone()),
        SlotPattern::Int(i) => Expr::Int(*i),
        SlotPattern::Real(x) => Expr::Real(*x),
    }
}

fn check_continuous(
    g: &Grammar,
    r: &Rule,
    c: &ContinuousBody,
    bound: &BTreeSet<&str>,
    push: &mut impl FnMut(DiagnosticKind),
) {
    let mut targets = BTreeSet::new();
    for d in &c.derivatives {
        if var_sort(g, r, &d.target) != Some(Sort::Real) {
            push(DiagnosticKind::BadDerivativeTarget(d.target.clone()));
        } else if !targets.insert(d.target.as_str()) {
            push(DiagnosticKind::DuplicateDerivative(d.target.clone()));
        }
        for v in vars_of(&d.rhs) {
            if v == AGE {
                push(DiagnosticKind::AgeOutsidePropensity);
            } else if !bound.contains(v) {
                push(DiagnosticKind::UnboundVariable(v.into()));
            }
        }
    }

    if r.lhs.len() != r.rhs.len() {
        push(DiagnosticKind::ContinuousShape(format!(
            "{} pattern terms but {} result terms",
            r.lhs.len(),
            r.rhs.len()
        )));
        return;
    }
    let mut restated = BTreeSet::new();
    for (i, (p, t)) in r.lhs.iter().zip(&r.rhs).enumerate() {
        if p.species != t.species || p.slots.len() != t.slots.len() {
            push(DiagnosticKind::ContinuousShape(format!("term {} changes species or arity", i + 1)));
            continue;
        }
        for (k, (s, e)) in p.slots.iter().zip(&t.slots).enumerate() {
            let plain = pattern_expr(s);
            let ok = match s {
                SlotPattern::Var(v) if targets.contains(v.as_str()) && restated.insert(v.clone()) => {
                    *e == Expr::binary(crate::expr::BinOp::Add, plain, Expr::Var(format!("d{v}")))
                }
                _ => *e == plain,
            };
            if !ok {
                push(DiagnosticKind::ContinuousShape(format!(
                    "slot {} of term {} must be `{}`",
                    k + 1,
                    i + 1,
                    match s {
                        SlotPattern::Var(v) if targets.contains(v.as_str()) => format!("{v} + d{v}"),
                        other => pattern_expr(other).to_string(),
                    }
                )));
            }
        }
    }
}

/// ODE updates do not refresh the match index, so no pattern may test a
/// slot whose value flows continuously.
fn check_continuous_slots(g: &Grammar, out: &mut Vec<Diagnostic>) {
    let mut flowing: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    for r in &g.rules {
        let Some(c) = r.continuous() else { continue };
        for d in &c.derivatives {
            for p in &r.lhs {
                for (k, s) in p.slots.iter().enumerate() {
                    if matches!(s, SlotPattern::Var(v) if *v == d.target) {
                        flowing.entry(p.species.as_str()).or_default().insert(k);
                    }
                }
            }
        }
    }
    if flowing.is_empty() {
        return;
    }
    for r in &g.rules {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut on_flow: BTreeSet<&str> = BTreeSet::new();
        for p in &r.lhs {
            let slots = flowing.get(p.species.as_str());
            for (k, s) in p.slots.iter().enumerate() {
                let flows = slots.is_some_and(|f| f.contains(&k));
                match s {
                    SlotPattern::Var(v) => {
                        *counts.entry(v).or_default() += 1;
                        if flows {
                            on_flow.insert(v);
                        }
                    }
                    lit if flows => out.push(Diagnostic {
                        kind: DiagnosticKind::ConstraintOnContinuousSlot(format!(
                            "literal `{}` tests slot {} of `{}`, which changes continuously",
                            slot_text_of(lit),
                            k + 1,
                            p.species
                        )),
                        rule: r.name.clone(),
                        span: p.span,
                    }),
                    _ => {}
                }
            }
        }
        for v in on_flow {
            if counts[v] > 1 {
                out.push(Diagnostic {
                    kind: DiagnosticKind::ConstraintOnContinuousSlot(format!(
                        "repeated variable `{v}` tests a slot that changes continuously"
                    )),
                    rule: r.name.clone(),
                    span: r.span,
                });
            }
        }
    }
}

fn slot_text_of(s: &SlotPattern) -> String {
    pattern_expr(s).to_string()
}
