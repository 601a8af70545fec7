//! A validated grammar compiled into index-based form for the store, the
//! engine and the operator builder.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::expr::{Env, Expr, Value};
use crate::grammar::{
    validate, Diagnostic, FreshVar, Grammar, RuleBody, SlotPattern, Sort,
};

#[derive(Debug, Clone, Error)]
pub enum ModelError {
    #[error("grammar has {} diagnostic(s); first: {}", .0.len(), .0[0])]
    Invalid(Vec<Diagnostic>),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{0}")]
pub struct SortError(pub String);

#[derive(Clone, Debug)]
pub struct SpeciesInfo {
    pub name: String,
    pub sorts: Vec<Sort>,
}

/// How one pattern slot is tested against a term parameter.
#[derive(Clone, Debug, PartialEq)]
pub enum SlotTest {
    /// First occurrence of rule variable `i`: binds it.
    Bind(usize),
    /// Later occurrence: must equal the value already bound.
    Check(usize),
    Literal(Value),
}

#[derive(Clone, Debug)]
pub struct CompiledPattern {
    pub species: usize,
    pub slots: Vec<SlotTest>,
}

#[derive(Clone, Debug)]
pub struct CompiledTemplate {
    pub species: usize,
    pub slots: Vec<Expr>,
}

/// A derivative contribution: the parameter at `slot` of the term bound to
/// pattern `pattern` moves at rate `rhs`.
#[derive(Clone, Debug)]
pub struct CompiledDerivative {
    pub pattern: usize,
    pub slot: usize,
    pub rhs: Expr,
}

#[derive(Clone, Debug)]
pub enum RuleKind {
    Jump { propensity: Expr, fresh: Vec<FreshVar>, uses_age: bool },
    Continuous { derivatives: Vec<CompiledDerivative> },
}

#[derive(Clone, Debug)]
pub struct CompiledRule {
    pub name: String,
    pub multiplicity: u32,
    /// Rule variables in binding order; `SlotTest` indices point here.
    pub vars: Vec<String>,
    pub lhs: Vec<CompiledPattern>,
    pub rhs: Vec<CompiledTemplate>,
    pub kind: RuleKind,
}

impl CompiledRule {
    pub fn is_jump(&self) -> bool {
        matches!(self.kind, RuleKind::Jump { .. })
    }

    pub fn uses_age(&self) -> bool {
        matches!(self.kind, RuleKind::Jump { uses_age: true, .. })
    }

    /// Environment induced by a full variable assignment.
    pub fn env(&self, consts: &Arc<BTreeMap<String, f64>>, vals: &[Option<Value>]) -> Env {
        let mut env = Env::with_constants(consts.clone());
        for (name, v) in self.vars.iter().zip(vals) {
            if let Some(v) = v {
                env.bind(name.clone(), v.clone());
            }
        }
        env
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    pub grammar: Grammar,
    pub hash: String,
    pub dim: usize,
    pub consts: Arc<BTreeMap<String, f64>>,
    pub species: Vec<SpeciesInfo>,
    pub rules: Vec<CompiledRule>,
    species_index: BTreeMap<String, usize>,
}

impl Model {
    /// Compiles a grammar; fails if `validate` reports anything.
    pub fn compile(g: &Grammar) -> Result<Model, ModelError> {
        let diags = validate(g);
        if !diags.is_empty() {
            return Err(ModelError::Invalid(diags));
        }
        let consts = g.constant_map();
        let species: Vec<SpeciesInfo> = g
            .species
            .iter()
            .map(|s| SpeciesInfo { name: s.name.clone(), sorts: s.sorts().collect() })
            .collect();
        let species_index: BTreeMap<String, usize> =
            species.iter().enumerate().map(|(i, s)| (s.name.clone(), i)).collect();

        let rules = g
            .rules
            .iter()
            .map(|r| {
                let mut vars: Vec<String> = Vec::new();
                let lhs: Vec<CompiledPattern> = r
                    .lhs
                    .iter()
                    .map(|p| CompiledPattern {
                        species: species_index[&p.species],
                        slots: p
                            .slots
                            .iter()
                            .map(|s| match s {
                                SlotPattern::Var(v) => match vars.iter().position(|x| x == v) {
                                    Some(i) => SlotTest::Check(i),
                                    None => {
                                        vars.push(v.clone());
                                        SlotTest::Bind(vars.len() - 1)
                                    }
                                },
                                SlotPattern::Int(i) => SlotTest::Literal(Value::Int(*i)),
                                SlotPattern::Real(x) => SlotTest::Literal(Value::Real(*x)),
                                SlotPattern::Const(c) => SlotTest::Literal(Value::Real(consts[c])),
                            })
                            .collect(),
                    })
                    .collect();
                let rhs = r
                    .rhs
                    .iter()
                    .map(|t| CompiledTemplate {
                        species: species_index[&t.species],
                        slots: t.slots.clone(),
                    })
                    .collect();
                let kind = match &r.body {
                    RuleBody::Jump(j) => RuleKind::Jump {
                        propensity: j.propensity.clone(),
                        fresh: j.fresh.clone(),
                        uses_age: r.uses_age(),
                    },
                    RuleBody::Continuous(c) => RuleKind::Continuous {
                        derivatives: c
                            .derivatives
                            .iter()
                            .map(|d| {
                                let (pattern, slot) = r
                                    .lhs
                                    .iter()
                                    .enumerate()
                                    .find_map(|(pi, p)| {
                                        p.slots
                                            .iter()
                                            .position(|s| matches!(s, SlotPattern::Var(v) if *v == d.target))
                                            .map(|k| (pi, k))
                                    })
                                    .expect("validated derivative target");
                                CompiledDerivative { pattern, slot, rhs: d.rhs.clone() }
                            })
                            .collect(),
                    },
                };
                CompiledRule {
                    name: r.name.clone(),
                    multiplicity: r.multiplicity,
                    vars,
                    lhs,
                    rhs,
                    kind,
                }
            })
            .collect();

        Ok(Model {
            grammar: g.clone(),
            hash: g.content_hash(),
            dim: g.dim,
            consts: Arc::new(consts),
            species,
            rules,
            species_index,
        })
    }

    pub fn species_id(&self, name: &str) -> Option<usize> {
        self.species_index.get(name).copied()
    }

    pub fn rule_id(&self, name: &str) -> Option<usize> {
        self.rules.iter().position(|r| r.name == name)
    }

    pub fn has_continuous(&self) -> bool {
        self.rules.iter().any(|r| !r.is_jump())
    }

    pub fn uses_age(&self) -> bool {
        self.rules.iter().any(CompiledRule::uses_age)
    }

    /// Checks `v` against the slot sort, widening integers into real slots.
    pub fn coerce(&self, sort: Sort, v: Value) -> Result<Value, SortError> {
        match (sort, v) {
            (Sort::Int(dom), Value::Int(i)) => match dom {
                Some((lo, hi)) if i < lo || i > hi => {
                    Err(SortError(format!("integer {i} outside domain {lo}..{hi}")))
                }
                _ => Ok(Value::Int(i)),
            },
            (Sort::Real, Value::Int(i)) => Ok(Value::Real(i as f64)),
            (Sort::Real, Value::Real(x)) if x.is_finite() => Ok(Value::Real(x)),
            (Sort::Vector, Value::Vector(xs)) if xs.len() == self.dim && xs.iter().all(|x| x.is_finite()) => {
                Ok(Value::Vector(xs))
            }
            (Sort::Vector, Value::Vector(xs)) if xs.len() != self.dim => Err(SortError(format!(
                "vector of length {} in a slot of dimension {}",
                xs.len(),
                self.dim
            ))),
            (sort, v) => Err(SortError(format!("value {v} does not fit a {sort:?} slot"))),
        }
    }

    /// Coerces a full parameter list for species `s`.
    pub fn coerce_params(&self, s: usize, params: Vec<Value>) -> Result<Vec<Value>, SortError> {
        let sorts = &self.species[s].sorts;
        if sorts.len() != params.len() {
            return Err(SortError(format!(
                "species `{}` has {} slots, got {} values",
                self.species[s].name,
                sorts.len(),
                params.len()
            )));
        }
        sorts.iter().zip(params).map(|(s, v)| self.coerce(*s, v)).collect()
    }
}
