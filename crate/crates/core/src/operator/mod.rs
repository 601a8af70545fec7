//! Exact semantics of count-based grammars: the truncated state space, the
//! generator of the master equation, and its transient solution.
//!
//! A count state records, for every species and every valuation of its
//! (finite-domain integer) slots, how many such terms are present. Rules act
//! on count states through ordered-injective matching, the same counting the
//! term store does, so sampled and exact dynamics agree by construction.

mod exact;
mod uniformize;

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::InitialTerm;
use crate::expr::{eval, eval_real, Env, Value};
use crate::grammar::{compose, ComposeError, Grammar, Sort};
use crate::matching::{bind_pattern, falling_factorial};
use crate::model::{CompiledRule, Model, ModelError, RuleKind};

pub use exact::{exact_sum, two_product};
pub use uniformize::{transient_distribution, UNIFORMIZATION_CHUNK};

/// Default bound on the number of enumerated states.
pub const DEFAULT_MAX_STATES: usize = 200_000;
const MAX_CLASSES: usize = 100_000;

#[derive(Debug, Clone, Error)]
pub enum OperatorError {
    #[error("grammar is not count-based: {0}")]
    NotCountBased(String),
    #[error("state space exceeds {limit} states")]
    CapTooLarge { limit: usize },
    #[error("propensity of rule `{rule}`: {message}")]
    Propensity { rule: String, message: String },
    #[error("seed state: {0}")]
    Seed(String),
    #[error("no cap given for species `{0}`")]
    MissingCap(String),
    #[error(transparent)]
    Compose(#[from] ComposeError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Truncation caps on the total count of each species.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Caps {
    pub default: Option<u32>,
    pub per_species: BTreeMap<String, u32>,
}

impl Caps {
    pub fn uniform(cap: u32) -> Self {
        Self { default: Some(cap), per_species: BTreeMap::new() }
    }

    pub fn with(mut self, species: &str, cap: u32) -> Self {
        self.per_species.insert(species.to_string(), cap);
        self
    }

    pub fn get(&self, species: &str) -> Result<u32, OperatorError> {
        self.per_species
            .get(species)
            .copied()
            .or(self.default)
            .ok_or_else(|| OperatorError::MissingCap(species.to_string()))
    }
}

/// One count coordinate: a species with a fixed slot valuation.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Class {
    pub species: String,
    pub params: Vec<i64>,
}

pub type CountState = Vec<u32>;

/// Checks the count-based restriction: no flow, no age, finite integer
/// slots, discrete scalar draws.
pub fn check_count_based(model: &Model) -> Result<(), OperatorError> {
    let bad = |m: String| Err(OperatorError::NotCountBased(m));
    for s in &model.species {
        for sort in &s.sorts {
            if !matches!(sort, Sort::Int(Some(_))) {
                return bad(format!("species `{}` has a slot that is not a bounded integer", s.name));
            }
        }
    }
    for r in &model.rules {
        match &r.kind {
            RuleKind::Continuous { .. } => return bad(format!("rule `{}` is continuous", r.name)),
            RuleKind::Jump { uses_age: true, .. } => return bad(format!("rule `{}` reads `age`", r.name)),
            RuleKind::Jump { fresh, .. } => {
                if let Some(f) = fresh.iter().find(|f| f.vector || !f.dist.family.is_discrete()) {
                    return bad(format!("rule `{}` draws `{}` from a continuous family", r.name, f.name));
                }
            }
        }
    }
    Ok(())
}

/// The classes of a model in species order, valuations in lexicographic
/// order.
fn classes_of(model: &Model) -> Result<Vec<(usize, Vec<i64>)>, OperatorError> {
    let mut out = Vec::new();
    for (s, info) in model.species.iter().enumerate() {
        let mut vals: Vec<Vec<i64>> = vec![Vec::new()];
        for sort in &info.sorts {
            let Sort::Int(Some((lo, hi))) = sort else {
                unreachable!("checked count-based")
            };
            vals = vals
                .into_iter()
                .flat_map(|v| {
                    (*lo..=*hi).map(move |x| {
                        let mut v = v.clone();
                        v.push(x);
                        v
                    })
                })
                .collect();
            if vals.len() + out.len() > MAX_CLASSES {
                return Err(OperatorError::CapTooLarge { limit: MAX_CLASSES });
            }
        }
        out.extend(vals.into_iter().map(|v| (s, v)));
    }
    Ok(out)
}

/// Ordered, indexed set of count states reachable from a seed.
#[derive(Clone, Debug)]
pub struct StateSpace {
    pub classes: Vec<Class>,
    class_species: Vec<usize>,
    class_index: HashMap<(usize, Vec<i64>), usize>,
    /// Cap per species, in model species order.
    caps: Vec<u32>,
    states: Vec<CountState>,
    index: HashMap<CountState, usize>,
    grammar_hash: String,
}

impl StateSpace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[CountState] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &CountState {
        &self.states[i]
    }

    pub fn index_of(&self, s: &[u32]) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn grammar_hash(&self) -> &str {
        &self.grammar_hash
    }

    /// Count state of a list of terms given as (species name, params).
    pub fn count_state<'a>(
        &self,
        model: &Model,
        terms: impl IntoIterator<Item = (&'a str, &'a [Value])>,
    ) -> Result<CountState, OperatorError> {
        let mut s = vec![0; self.classes.len()];
        for (species, params) in terms {
            let sp = model
                .species_id(species)
                .ok_or_else(|| OperatorError::Seed(format!("unknown species `{species}`")))?;
            let ints = params
                .iter()
                .map(|v| match v {
                    Value::Int(i) => Ok(*i),
                    Value::Real(x) if x.fract() == 0.0 => Ok(*x as i64),
                    v => Err(OperatorError::Seed(format!("value {v} is not an integer"))),
                })
                .collect::<Result<Vec<i64>, _>>()?;
            let c = self
                .class_index
                .get(&(sp, ints))
                .ok_or_else(|| OperatorError::Seed(format!("term of `{species}` outside the slot domains")))?;
            s[*c] += 1;
        }
        Ok(s)
    }

    /// Total count per species (model order) of a state.
    pub fn species_totals(&self, s: &[u32], n_species: usize) -> Vec<u32> {
        let mut t = vec![0; n_species];
        for (c, n) in s.iter().enumerate() {
            t[self.class_species[c]] += n;
        }
        t
    }

    /// Writes the index-to-state legend as JSON.
    pub fn write_legend<W: Write>(&self, out: W) -> serde_json::Result<()> {
        #[derive(Serialize)]
        struct Legend<'a> {
            grammar_hash: &'a str,
            classes: &'a [Class],
            states: &'a [CountState],
        }
        serde_json::to_writer_pretty(out, &Legend { grammar_hash: &self.grammar_hash, classes: &self.classes, states: &self.states })
    }
}

/// One rule application from a state, before summation.
#[derive(Clone, Debug)]
struct Transition {
    /// `None` when the target lies outside the caps or the slot domains.
    target: Option<CountState>,
    contribution: Contribution,
}

/// A rate as the product of its factors: match count times multiplicity,
/// propensity value, draw probability.
#[derive(Clone, Copy, Debug)]
struct Contribution {
    count: u64,
    value: f64,
    prob: f64,
}

impl Contribution {
    fn rate(self) -> f64 {
        self.count as f64 * self.value * self.prob
    }

    /// The exact product as four floats summing to it.
    fn expansion(self) -> [f64; 4] {
        let (a, e) = two_product(self.count as f64, self.value);
        let (b1, f1) = two_product(a, self.prob);
        let (b2, f2) = two_product(e, self.prob);
        [b1, f1, b2, f2]
    }
}

struct Ctx<'a> {
    model: &'a Model,
    space_classes: &'a HashMap<(usize, Vec<i64>), usize>,
    class_list: &'a [(usize, Vec<i64>)],
    caps: &'a [u32],
}

impl Ctx<'_> {
    /// Every transition out of `s`, rule by rule.
    fn transitions(&self, s: &[u32]) -> Result<Vec<Transition>, OperatorError> {
        let mut out = Vec::new();
        for rule in &self.model.rules {
            let mut used = Vec::with_capacity(rule.lhs.len());
            self.lhs_tuples(rule, s, 0, &mut used, vec![None; rule.vars.len()], &mut out)?;
        }
        Ok(out)
    }

    fn lhs_tuples(
        &self,
        rule: &CompiledRule,
        s: &[u32],
        pos: usize,
        used: &mut Vec<usize>,
        vals: Vec<Option<Value>>,
        out: &mut Vec<Transition>,
    ) -> Result<(), OperatorError> {
        if pos == rule.lhs.len() {
            return self.fire(rule, s, used, &vals, out);
        }
        let p = &rule.lhs[pos];
        for (c, (sp, params)) in self.class_list.iter().enumerate() {
            if *sp != p.species || s[c] == 0 {
                continue;
            }
            // Only the first occurrence of a class in the tuple needs to be
            // available; the falling factorial accounts for repeats.
            let params: Vec<Value> = params.iter().map(|x| Value::Int(*x)).collect();
            let mut v = vals.clone();
            if bind_pattern(p, &params, &mut v) {
                used.push(c);
                self.lhs_tuples(rule, s, pos + 1, used, v, out)?;
                used.pop();
            }
        }
        Ok(())
    }

    fn fire(
        &self,
        rule: &CompiledRule,
        s: &[u32],
        used: &[usize],
        vals: &[Option<Value>],
        out: &mut Vec<Transition>,
    ) -> Result<(), OperatorError> {
        let mut uses: BTreeMap<usize, u64> = BTreeMap::new();
        for c in used {
            *uses.entry(*c).or_default() += 1;
        }
        let matches: u64 = uses.iter().map(|(c, k)| falling_factorial(s[*c] as u64, *k)).product();
        if matches == 0 {
            return Ok(());
        }
        let RuleKind::Jump { propensity, fresh, .. } = &rule.kind else {
            unreachable!("checked count-based")
        };
        let perr = |message: String| OperatorError::Propensity { rule: rule.name.clone(), message };
        let env = rule.env(&self.model.consts, vals);
        let value = eval_real(propensity, &env).map_err(|e| perr(e.to_string()))?;
        if !value.is_finite() || value < 0.0 {
            return Err(perr(format!("propensity evaluated to {value}")));
        }
        if value == 0.0 {
            return Ok(());
        }
        let count = matches * rule.multiplicity as u64;
        let mut outcomes = Vec::new();
        enumerate_draws(rule, fresh, 0, env, 1.0, &mut outcomes).map_err(perr)?;
        for (env, prob) in outcomes {
            let target = self.target(rule, s, used, &env).map_err(perr)?;
            if target.as_deref() == Some(s) {
                continue;
            }
            out.push(Transition { target, contribution: Contribution { count, value, prob } });
        }
        Ok(())
    }

    fn target(&self, rule: &CompiledRule, s: &[u32], used: &[usize], env: &Env) -> Result<Option<CountState>, String> {
        let mut t = s.to_vec();
        for c in used {
            t[*c] -= 1;
        }
        for tpl in &rule.rhs {
            let sorts = &self.model.species[tpl.species].sorts;
            let mut key = Vec::with_capacity(tpl.slots.len());
            for (e, sort) in tpl.slots.iter().zip(sorts) {
                let v = eval(e, env).map_err(|e| e.to_string())?;
                match self.model.coerce(*sort, v) {
                    Ok(Value::Int(i)) => key.push(i),
                    _ => return Ok(None),
                }
            }
            let Some(c) = self.space_classes.get(&(tpl.species, key)) else {
                return Ok(None);
            };
            t[*c] += 1;
        }
        let mut totals = vec![0u32; self.caps.len()];
        for (c, n) in t.iter().enumerate() {
            totals[self.class_list[c].0] += n;
        }
        if totals.iter().zip(self.caps).any(|(n, cap)| n > cap) {
            return Ok(None);
        }
        Ok(Some(t))
    }
}

/// Every joint outcome of the fresh draws with its probability.
fn enumerate_draws(
    rule: &CompiledRule,
    fresh: &[crate::grammar::FreshVar],
    k: usize,
    env: Env,
    prob: f64,
    out: &mut Vec<(Env, f64)>,
) -> Result<(), String> {
    if k == fresh.len() {
        out.push((env, prob));
        return Ok(());
    }
    let f = &fresh[k];
    let d = f.dist.resolve(&env).map_err(|e| format!("draw `{}`: {e}", f.name))?;
    for (v, p) in d.outcomes() {
        enumerate_draws(rule, fresh, k + 1, env.clone().with(f.name.clone(), v), prob * p, out)?;
    }
    Ok(())
}

fn caps_vector(model: &Model, caps: &Caps) -> Result<Vec<u32>, OperatorError> {
    model.species.iter().map(|s| caps.get(&s.name)).collect()
}

/// Count state of an initial-term list.
fn seed_state(model: &Model, space: &StateSpace, seed: &[InitialTerm]) -> Result<CountState, OperatorError> {
    let mut s = vec![0u32; space.classes.len()];
    for t in seed {
        let one = space.count_state(model, [(t.species.as_str(), t.params.as_slice())])?;
        for (a, b) in s.iter_mut().zip(one) {
            *a += b * t.count as u32;
        }
    }
    Ok(s)
}

/// Breadth-first closure of `seed` under the rules, dropping transitions
/// that leave the caps.
pub fn enumerate_states(
    model: &Model,
    seed: &[InitialTerm],
    caps: &Caps,
    max_states: usize,
) -> Result<StateSpace, OperatorError> {
    check_count_based(model)?;
    let class_list = classes_of(model)?;
    let class_index: HashMap<(usize, Vec<i64>), usize> =
        class_list.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
    let caps_v = caps_vector(model, caps)?;
    let mut space = StateSpace {
        classes: class_list
            .iter()
            .map(|(s, p)| Class { species: model.species[*s].name.clone(), params: p.clone() })
            .collect(),
        class_species: class_list.iter().map(|(s, _)| *s).collect(),
        class_index,
        caps: caps_v,
        states: Vec::new(),
        index: HashMap::new(),
        grammar_hash: model.hash.clone(),
    };
    let s0 = seed_state(model, &space, seed)?;
    let totals = space.species_totals(&s0, model.species.len());
    if let Some((i, _)) = totals.iter().zip(&space.caps).enumerate().find(|(_, (n, c))| n > c) {
        return Err(OperatorError::Seed(format!("seed exceeds the cap of `{}`", model.species[i].name)));
    }
    let ctx = Ctx { model, space_classes: &space.class_index, class_list: &class_list, caps: &space.caps };
    let mut states = vec![s0.clone()];
    let mut index = HashMap::from([(s0, 0usize)]);
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        for tr in ctx.transitions(&states[i].clone())? {
            let Some(t) = tr.target else { continue };
            if !index.contains_key(&t) {
                if states.len() >= max_states {
                    return Err(OperatorError::CapTooLarge { limit: max_states });
                }
                index.insert(t.clone(), states.len());
                queue.push_back(states.len());
                states.push(t);
            }
        }
    }
    space.states = states;
    space.index = index;
    Ok(space)
}

/// Sparse generator, compressed by column; column `j` holds the flows out of
/// state `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorMatrix {
    n: usize,
    col_ptr: Vec<usize>,
    rows: Vec<usize>,
    values: Vec<f64>,
    /// States with at least one transition dropped by truncation.
    boundary: Vec<bool>,
}

impl GeneratorMatrix {
    pub fn zero(n: usize) -> Self {
        Self { n, col_ptr: vec![0; n + 1], rows: Vec::new(), values: Vec::new(), boundary: vec![false; n] }
    }

    /// Assembles a matrix from (row, col, value) entries; repeats add up.
    pub fn from_triplets(n: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut cols: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
        for (i, j, v) in entries {
            *cols[*j].entry(*i).or_default() += v;
        }
        let mut m = Self::zero(n);
        m.col_ptr.clear();
        m.col_ptr.push(0);
        for col in cols {
            for (i, v) in col {
                m.rows.push(i);
                m.values.push(v);
            }
            m.col_ptr.push(m.rows.len());
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Stored entries of column `j` as (row, value), rows ascending.
    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        self.rows[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.column(j).find(|(r, _)| *r == i).map_or(0.0, |(_, v)| v)
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |j| self.column(j).map(move |(i, v)| (i, j, v)))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, j, v) in self.triplets() {
            d[i][j] = v;
        }
        d
    }

    /// Largest absolute column sum.
    pub fn max_column_sum(&self) -> f64 {
        (0..self.n).map(|j| self.column(j).map(|(_, v)| v).sum::<f64>().abs()).fold(0.0, f64::max)
    }

    /// Largest exit rate, the uniformization constant.
    pub fn max_exit_rate(&self) -> f64 {
        (0..self.n).map(|j| -self.get(j, j)).fold(0.0, f64::max)
    }

    pub fn is_boundary(&self, j: usize) -> bool {
        self.boundary[j]
    }

    /// Probability sitting on states whose outflow was truncated.
    pub fn boundary_mass(&self, p: &[f64]) -> f64 {
        p.iter().zip(&self.boundary).filter(|(_, b)| **b).map(|(x, _)| x).sum()
    }

    /// `y = W x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for (j, xj) in x.iter().enumerate() {
            if *xj == 0.0 {
                continue;
            }
            for (i, v) in self.column(j) {
                y[i] += v * xj;
            }
        }
    }

    /// Writes `row col value` lines, one per stored entry.
    pub fn write_triplets<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (i, j, v) in self.triplets() {
            writeln!(out, "{i} {j} {v:?}")?;
        }
        Ok(())
    }
}

/// Raw contributions per column: target row and factors.
type Contributions = Vec<Vec<(usize, Contribution)>>;

fn contributions(model: &Model, space: &StateSpace) -> Result<(Contributions, Vec<bool>), OperatorError> {
    check_count_based(model)?;
    let class_list: Vec<(usize, Vec<i64>)> = space
        .classes
        .iter()
        .map(|c| {
            model
                .species_id(&c.species)
                .map(|s| (s, c.params.clone()))
                .ok_or_else(|| OperatorError::Seed(format!("space has unknown species `{}`", c.species)))
        })
        .collect::<Result<_, _>>()?;
    if class_list != classes_of(model)? {
        return Err(OperatorError::Seed("state space was enumerated for different declarations".into()));
    }
    let ctx = Ctx { model, space_classes: &space.class_index, class_list: &class_list, caps: &space.caps };
    let mut cols = Vec::with_capacity(space.len());
    let mut boundary = vec![false; space.len()];
    for (j, s) in space.states.iter().enumerate() {
        let mut col = Vec::new();
        for tr in ctx.transitions(s)? {
            match tr.target.as_ref().and_then(|t| space.index_of(t)) {
                Some(i) => col.push((i, tr.contribution)),
                None => boundary[j] = true,
            }
        }
        cols.push(col);
    }
    Ok((cols, boundary))
}

/// Generator of `model` on `space`: each in-space transition adds its rate
/// to the off-diagonal entry and subtracts it from the diagonal.
pub fn build_generator(model: &Model, space: &StateSpace) -> Result<GeneratorMatrix, OperatorError> {
    let (cols, boundary) = contributions(model, space)?;
    let mut col_ptr = vec![0];
    let mut rows = Vec::new();
    let mut values = Vec::new();
    for (j, col) in cols.iter().enumerate() {
        let mut entries: BTreeMap<usize, f64> = BTreeMap::new();
        let mut out = 0.0;
        for (i, c) in col {
            let r = c.rate();
            *entries.entry(*i).or_default() += r;
            out += r;
        }
        if out != 0.0 || !entries.is_empty() {
            *entries.entry(j).or_default() -= out;
        }
        for (i, v) in entries {
            rows.push(i);
            values.push(v);
        }
        col_ptr.push(rows.len());
    }
    Ok(GeneratorMatrix { n: space.len(), col_ptr, rows, values, boundary })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompositionReport {
    pub states: usize,
    /// Largest entry of `W(g1+g2) - W(g1) - W(g2)`, computed exactly from
    /// the rate factors.
    pub max_residual: f64,
    /// The same difference taken on the assembled floating-point matrices.
    pub max_float_residual: f64,
}

/// `g` with the declarations of `union`, so that all three generators index
/// the same classes.
fn on_declarations(g: &Grammar, union: &Grammar) -> Grammar {
    Grammar { constants: union.constants.clone(), species: union.species.clone(), ..g.clone() }
}

/// Builds the generators of `g1`, `g2` and their union on the union's state
/// space and measures how far the union's generator is from the sum.
pub fn check_compositionality(
    g1: &Grammar,
    g2: &Grammar,
    seed: &[InitialTerm],
    caps: &Caps,
) -> Result<CompositionReport, OperatorError> {
    let g12 = compose(g1, g2)?;
    let m12 = Model::compile(&g12)?;
    let m1 = Model::compile(&on_declarations(g1, &g12))?;
    let m2 = Model::compile(&on_declarations(g2, &g12))?;
    let space = enumerate_states(&m12, seed, caps, DEFAULT_MAX_STATES)?;
    let (c12, _) = contributions(&m12, &space)?;
    let (c1, _) = contributions(&m1, &space)?;
    let (c2, _) = contributions(&m2, &space)?;
    let mut max_residual: f64 = 0.0;
    for j in 0..space.len() {
        let mut terms: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for (col, sign) in [(&c12[j], 1.0), (&c1[j], -1.0), (&c2[j], -1.0)] {
            for (i, c) in col {
                let e = c.expansion();
                // Off-diagonal gains the rate, the diagonal loses it.
                terms.entry(*i).or_default().extend(e.iter().map(|x| sign * x));
                terms.entry(j).or_default().extend(e.iter().map(|x| -sign * x));
            }
        }
        for t in terms.into_values() {
            max_residual = max_residual.max(exact_sum(t).abs());
        }
    }
    let w12 = build_generator(&m12, &space)?;
    let w1 = build_generator(&m1, &space)?;
    let w2 = build_generator(&m2, &space)?;
    let mut max_float_residual: f64 = 0.0;
    for j in 0..space.len() {
        let mut rows: Vec<usize> = w12.column(j).chain(w1.column(j)).chain(w2.column(j)).map(|(i, _)| i).collect();
        rows.sort_unstable();
        rows.dedup();
        for i in rows {
            let d = w12.get(i, j) - w1.get(i, j) - w2.get(i, j);
            max_float_residual = max_float_residual.max(d.abs());
        }
    }
    Ok(CompositionReport { states: space.len(), max_residual, max_float_residual })
}

/// A solved transient distribution, ready to serialize.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactDistribution {
    pub grammar: String,
    pub grammar_hash: String,
    pub t: f64,
    pub tol: f64,
    pub caps: Caps,
    pub classes: Vec<Class>,
    pub states: Vec<CountState>,
    pub p: Vec<f64>,
    pub boundary_mass: f64,
}

impl ExactDistribution {
    /// Probability of a count state (zero outside the space).
    pub fn probability(&self, s: &[u32]) -> f64 {
        self.states.iter().position(|x| x == s).map_or(0.0, |i| self.p[i])
    }
}

/// Enumerates, builds and solves in one go, starting from `seed` with
/// probability one.
pub fn solve(
    model: &Arc<Model>,
    seed: &[InitialTerm],
    caps: &Caps,
    t: f64,
    tol: f64,
) -> Result<(ExactDistribution, GeneratorMatrix, StateSpace), OperatorError> {
    solve_within(model, seed, caps, t, tol, DEFAULT_MAX_STATES)
}

/// [`solve`] with an explicit bound on the number of states.
pub fn solve_within(
    model: &Arc<Model>,
    seed: &[InitialTerm],
    caps: &Caps,
    t: f64,
    tol: f64,
    max_states: usize,
) -> Result<(ExactDistribution, GeneratorMatrix, StateSpace), OperatorError> {
    let space = enumerate_states(model, seed, caps, max_states)?;
    let w = build_generator(model, &space)?;
    let mut p0 = vec![0.0; space.len()];
    p0[0] = 1.0;
    let p = transient_distribution(&w, &p0, t, tol);
    let dist = ExactDistribution {
        grammar: model.grammar.name.clone(),
        grammar_hash: model.hash.clone(),
        t,
        tol,
        caps: caps.clone(),
        classes: space.classes.clone(),
        states: space.states.clone(),
        boundary_mass: w.boundary_mass(&p),
        p,
    };
    Ok((dist, w, space))
}

/// Count state of a store dump under a space's classes.
pub fn count_state_of(
    space_classes: &[Class],
    records: &[crate::store::TermRecord],
) -> Option<CountState> {
    let mut s = vec![0u32; space_classes.len()];
    for r in records {
        let params: Vec<i64> = r
            .params
            .iter()
            .map(|v| match v {
                Value::Int(i) => Some(*i),
                _ => None,
            })
            .collect::<Option<_>>()?;
        let c = space_classes.iter().position(|c| c.species == r.species && c.params == params)?;
        s[c] += 1;
    }
    Some(s)
}
