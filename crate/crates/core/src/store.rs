//! The live multiset of terms and its incrementally maintained match index.
//!
//! Every rule keeps a table from bound-id tuples to the time the match became
//! valid. Inserting a term joins it against the per-species term sets at each
//! pattern position it can fill; removing a term retires exactly the matches
//! that bind it, found through a reverse index.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{eval, Env, Value};
use crate::matching::bind_pattern;
use crate::model::{CompiledRule, Model, SortError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TermId(pub u64);

impl std::fmt::Display for TermId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub species: usize,
    pub params: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StoreError {
    #[error("unknown term {0}")]
    UnknownTerm(TermId),
    #[error("unknown species `{0}`")]
    UnknownSpecies(String),
    #[error("sort error: {0}")]
    Sort(#[from] SortError),
    #[error("stale match for rule `{rule}`")]
    StaleMatch { rule: String },
    #[error("rule `{rule}`: {message}")]
    Domain { rule: String, message: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Match {
    pub rule: usize,
    pub ids: Vec<TermId>,
    pub enabled_at: f64,
}

/// What one rewrite did to the store.
#[derive(Clone, Debug, PartialEq)]
pub struct RewriteDelta {
    pub removed: Vec<(TermId, Term)>,
    pub created: Vec<TermId>,
}

/// Serialized form of one live term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermRecord {
    pub id: u64,
    pub species: String,
    pub params: Vec<Value>,
}

#[derive(Clone, Debug)]
pub struct TermStore {
    model: Arc<Model>,
    terms: BTreeMap<TermId, Term>,
    by_species: Vec<BTreeSet<TermId>>,
    index: Vec<BTreeMap<Vec<TermId>, f64>>,
    by_term: BTreeMap<TermId, BTreeSet<(usize, Vec<TermId>)>>,
    /// species -> (rule, pattern position) pairs it can fill.
    positions: Vec<Vec<(usize, usize)>>,
    time: f64,
    next_id: u64,
}

impl TermStore {
    pub fn new(model: Arc<Model>) -> Self {
        let mut positions = vec![Vec::new(); model.species.len()];
        for (r, rule) in model.rules.iter().enumerate() {
            for (k, p) in rule.lhs.iter().enumerate() {
                positions[p.species].push((r, k));
            }
        }
        let mut index = vec![BTreeMap::new(); model.rules.len()];
        for (r, rule) in model.rules.iter().enumerate() {
            if rule.lhs.is_empty() {
                index[r].insert(Vec::new(), 0.0);
            }
        }
        Self {
            by_species: vec![BTreeSet::new(); model.species.len()],
            model,
            terms: BTreeMap::new(),
            index,
            by_term: BTreeMap::new(),
            positions,
            time: 0.0,
            next_id: 0,
        }
    }

    pub fn model(&self) -> &Arc<Model> {
        &self.model
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Advances the store clock; new matches are stamped with it.
    pub fn set_time(&mut self, t: f64) {
        debug_assert!(t >= self.time, "store clock must not run backwards");
        self.time = t;
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term(&self, id: TermId) -> Option<&Term> {
        self.terms.get(&id)
    }

    pub fn terms(&self) -> impl Iterator<Item = (TermId, &Term)> {
        self.terms.iter().map(|(k, v)| (*k, v))
    }

    pub fn count(&self, species: usize) -> usize {
        self.by_species[species].len()
    }

    /// Inserts a term of the named species.
    pub fn insert(&mut self, species: &str, params: Vec<Value>) -> Result<TermId, StoreError> {
        let s = self
            .model
            .species_id(species)
            .ok_or_else(|| StoreError::UnknownSpecies(species.to_string()))?;
        let params = self.model.coerce_params(s, params)?;
        Ok(self.insert_unchecked(s, params))
    }

    fn insert_unchecked(&mut self, species: usize, params: Vec<Value>) -> TermId {
        let id = TermId(self.next_id);
        self.next_id += 1;
        self.insert_with_id(id, species, params);
        id
    }

    /// Inserts with a caller-chosen id (used when replaying a log). The id
    /// must not be live; later automatic ids stay above it.
    pub fn insert_with_id(&mut self, id: TermId, species: usize, params: Vec<Value>) {
        assert!(!self.terms.contains_key(&id), "term id {id} already live");
        self.next_id = self.next_id.max(id.0 + 1);
        self.terms.insert(id, Term { species, params });
        let mut found = Vec::new();
        for &(r, k) in &self.positions[species] {
            let rule = &self.model.rules[r];
            let mut ids = Vec::with_capacity(rule.lhs.len());
            let vals = vec![None; rule.vars.len()];
            self.extend(rule, 0, Some((k, id)), &mut ids, vals, &mut |m| found.push((r, m)));
        }
        self.by_species[species].insert(id);
        for (r, ids) in found {
            for t in &ids {
                self.by_term.entry(*t).or_default().insert((r, ids.clone()));
            }
            self.index[r].insert(ids, self.time);
        }
    }

    /// Removes a term and retires every match that binds it.
    pub fn remove(&mut self, id: TermId) -> Result<Term, StoreError> {
        let term = self.terms.remove(&id).ok_or(StoreError::UnknownTerm(id))?;
        self.by_species[term.species].remove(&id);
        if let Some(ms) = self.by_term.remove(&id) {
            for (r, ids) in ms {
                self.index[r].remove(&ids);
                for other in &ids {
                    if *other != id {
                        if let Some(set) = self.by_term.get_mut(other) {
                            set.remove(&(r, ids.clone()));
                        }
                    }
                }
            }
        }
        Ok(term)
    }

    /// Backtracking join over pattern positions. `fixed` pins one position
    /// to one term; that term is excluded from every other position.
    fn extend(
        &self,
        rule: &CompiledRule,
        pos: usize,
        fixed: Option<(usize, TermId)>,
        ids: &mut Vec<TermId>,
        vals: Vec<Option<Value>>,
        out: &mut dyn FnMut(Vec<TermId>),
    ) {
        if pos == rule.lhs.len() {
            out(ids.clone());
            return;
        }
        let pattern = &rule.lhs[pos];
        let try_term = |id: TermId, ids: &mut Vec<TermId>, out: &mut dyn FnMut(Vec<TermId>)| {
            let term = &self.terms[&id];
            if term.species != pattern.species {
                return;
            }
            let mut v = vals.clone();
            if bind_pattern(pattern, &term.params, &mut v) {
                ids.push(id);
                self.extend(rule, pos + 1, fixed, ids, v, out);
                ids.pop();
            }
        };
        match fixed {
            Some((k, id)) if k == pos => try_term(id, ids, out),
            _ => {
                for &id in &self.by_species[pattern.species] {
                    if ids.contains(&id) || fixed.is_some_and(|(_, f)| f == id) {
                        continue;
                    }
                    try_term(id, ids, out);
                }
            }
        }
    }

    pub fn match_count(&self, rule: usize) -> usize {
        self.index[rule].len()
    }

    /// Live matches of `rule` in bound-id order.
    pub fn matches(&self, rule: usize) -> Vec<Match> {
        self.index[rule]
            .iter()
            .map(|(ids, t)| Match { rule, ids: ids.clone(), enabled_at: *t })
            .collect()
    }

    pub fn iter_matches(&self, rule: usize) -> impl Iterator<Item = (&[TermId], f64)> {
        self.index[rule].iter().map(|(ids, t)| (ids.as_slice(), *t))
    }

    pub fn enabled_at(&self, rule: usize, ids: &[TermId]) -> Option<f64> {
        self.index[rule].get(ids).copied()
    }

    /// Variable assignment of a live match, read from current parameters.
    pub fn match_values(&self, rule: usize, ids: &[TermId]) -> Option<Vec<Option<Value>>> {
        let r = &self.model.rules[rule];
        let mut vals = vec![None; r.vars.len()];
        for (p, id) in r.lhs.iter().zip(ids) {
            let t = self.terms.get(id)?;
            if !bind_pattern(p, &t.params, &mut vals) {
                return None;
            }
        }
        Some(vals)
    }

    pub fn match_env(&self, rule: usize, ids: &[TermId]) -> Option<Env> {
        let vals = self.match_values(rule, ids)?;
        Some(self.model.rules[rule].env(&self.model.consts, &vals))
    }

    /// Consumes the bound terms and creates the instantiated right-hand side
    /// as one step. Templates are evaluated before anything is touched, so
    /// an error leaves the store unchanged.
    pub fn apply_rewrite(
        &mut self,
        rule: usize,
        ids: &[TermId],
        fresh: &[(String, Value)],
    ) -> Result<RewriteDelta, StoreError> {
        let model = self.model.clone();
        let r = &model.rules[rule];
        if !self.index[rule].contains_key(ids) {
            return Err(StoreError::StaleMatch { rule: r.name.clone() });
        }
        let mut env = self
            .match_env(rule, ids)
            .ok_or_else(|| StoreError::StaleMatch { rule: r.name.clone() })?;
        for (k, v) in fresh {
            env.bind(k.clone(), v.clone());
        }
        let domain = |message: String| StoreError::Domain { rule: r.name.clone(), message };
        let mut created = Vec::with_capacity(r.rhs.len());
        for t in &r.rhs {
            let mut params = Vec::with_capacity(t.slots.len());
            for (e, sort) in t.slots.iter().zip(&model.species[t.species].sorts) {
                let v = eval(e, &env).map_err(|err| domain(err.to_string()))?;
                params.push(model.coerce(*sort, v).map_err(|err| domain(err.0))?);
            }
            created.push((t.species, params));
        }
        let mut removed = Vec::with_capacity(ids.len());
        for id in ids {
            removed.push((*id, self.remove(*id)?));
        }
        let created = created
            .into_iter()
            .map(|(s, p)| self.insert_unchecked(s, p))
            .collect();
        Ok(RewriteDelta { removed, created })
    }

    /// Overwrites one parameter in place. Used for continuous flow; the
    /// match index is deliberately left alone.
    pub fn set_param(&mut self, id: TermId, slot: usize, value: Value) -> Result<(), StoreError> {
        let t = self.terms.get_mut(&id).ok_or(StoreError::UnknownTerm(id))?;
        t.params[slot] = value;
        Ok(())
    }

    /// From-scratch enumeration of `rule`'s matches.
    pub fn enumerate_matches(&self, rule: usize) -> Vec<Vec<TermId>> {
        let r = &self.model.rules[rule];
        let mut out = Vec::new();
        let mut ids = Vec::new();
        self.extend(r, 0, None, &mut ids, vec![None; r.vars.len()], &mut |m| out.push(m));
        out.sort();
        out
    }

    /// Checks the incremental structures against the live set.
    pub fn audit(&self) -> Result<(), String> {
        for (s, set) in self.by_species.iter().enumerate() {
            let live: BTreeSet<TermId> =
                self.terms.iter().filter(|(_, t)| t.species == s).map(|(k, _)| *k).collect();
            if *set != live {
                return Err(format!("species index for `{}` is out of sync", self.model.species[s].name));
            }
        }
        for r in 0..self.model.rules.len() {
            let fresh = self.enumerate_matches(r);
            let have: Vec<Vec<TermId>> = self.index[r].keys().cloned().collect();
            if fresh != have {
                return Err(format!(
                    "rule `{}`: index has {} matches, enumeration has {}",
                    self.model.rules[r].name,
                    have.len(),
                    fresh.len()
                ));
            }
            for (ids, t) in &self.index[r] {
                if *t > self.time {
                    return Err(format!("match enabled in the future at {t}"));
                }
                let distinct: BTreeSet<_> = ids.iter().collect();
                if distinct.len() != ids.len() {
                    return Err("match binds a term twice".into());
                }
                for id in ids {
                    if !self.by_term.get(id).is_some_and(|s| s.contains(&(r, ids.clone()))) {
                        return Err(format!("reverse index misses {id}"));
                    }
                }
            }
        }
        for (id, set) in &self.by_term {
            if !self.terms.contains_key(id) && !set.is_empty() {
                return Err(format!("reverse index keeps dead term {id}"));
            }
        }
        Ok(())
    }

    /// Live terms sorted by id.
    pub fn dump(&self) -> Vec<TermRecord> {
        self.terms
            .iter()
            .map(|(id, t)| TermRecord {
                id: id.0,
                species: self.model.species[t.species].name.clone(),
                params: t.params.clone(),
            })
            .collect()
    }

    /// Rebuilds a store from a dump, keeping ids.
    pub fn from_dump(model: Arc<Model>, records: &[TermRecord], time: f64) -> Result<Self, StoreError> {
        let mut store = TermStore::new(model);
        store.time = time;
        for rec in records {
            let s = store
                .model
                .species_id(&rec.species)
                .ok_or_else(|| StoreError::UnknownSpecies(rec.species.clone()))?;
            let params = store.model.coerce_params(s, rec.params.clone())?;
            if store.terms.contains_key(&TermId(rec.id)) {
                return Err(StoreError::Domain {
                    rule: String::new(),
                    message: format!("duplicate term id {}", rec.id),
                });
            }
            store.insert_with_id(TermId(rec.id), s, params);
        }
        Ok(store)
    }

    /// Counts per species, in declaration order.
    pub fn species_counts(&self) -> Vec<usize> {
        self.by_species.iter().map(BTreeSet::len).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_grammar;

    fn store(src: &str) -> TermStore {
        TermStore::new(Arc::new(Model::compile(&parse_grammar(src).unwrap()).unwrap()))
    }

    #[test]
    fn pair_rule_counts() {
        let mut s = store("grammar G { species A[int]; rule p: A[x], A[y] -> 0 with 1; }");
        let ids: Vec<_> = (0..3).map(|i| s.insert("A", vec![Value::Int(i)]).unwrap()).collect();
        assert_eq!(s.match_count(0), 6);
        s.remove(ids[1]).unwrap();
        assert_eq!(s.match_count(0), 2);
        s.audit().unwrap();
    }

    #[test]
    fn irrelevant_species_do_not_match() {
        let mut s = store("grammar G { species A[]; species B[]; rule d: A[] -> 0 with 1; }");
        s.insert("A", vec![]).unwrap();
        let before = s.matches(0);
        s.insert("B", vec![]).unwrap();
        assert_eq!(s.matches(0), before);
    }

    #[test]
    fn literal_and_distinctness() {
        let mut s = store(
            "grammar G { const cmax = 3; species cell[int(0..3), real];
               rule diff: cell[c1, p1], cell[cmax, p2] -> cell[c1, p1], cell[cmax, p2] with 1; }",
        );
        let a = s.insert("cell", vec![Value::Int(0), Value::Real(0.0)]).unwrap();
        let b = s.insert("cell", vec![Value::Int(3), Value::Real(0.0)]).unwrap();
        assert_eq!(s.enumerate_matches(0), vec![vec![a, b]]);
        assert_eq!(s.match_count(0), 1);
    }

    #[test]
    fn rewrite_is_atomic() {
        let mut s = store("grammar G { species A[real]; rule r: A[v] -> A[log(v - 1.0)] with 1; }");
        let id = s.insert("A", vec![Value::Real(0.5)]).unwrap();
        let err = s.apply_rewrite(0, &[id], &[]).unwrap_err();
        assert!(matches!(err, StoreError::Domain { .. }));
        assert!(s.term(id).is_some());
        assert_eq!(s.match_count(0), 1);
    }

    #[test]
    fn self_rewrite_changes_id() {
        let mut s = store("grammar G { species A[]; rule r: A[] -> A[] with 1; }");
        let id = s.insert("A", vec![]).unwrap();
        let d = s.apply_rewrite(0, &[id], &[]).unwrap();
        assert_ne!(d.created[0], id);
        assert_eq!(s.len(), 1);
        assert!(matches!(s.apply_rewrite(0, &[id], &[]), Err(StoreError::StaleMatch { .. })));
    }

    #[test]
    fn enabled_at_tracks_creation() {
        let mut s = store("grammar G { species A[]; rule r: A[] -> 0 with 1; }");
        let a = s.insert("A", vec![]).unwrap();
        s.set_time(2.0);
        let b = s.insert("A", vec![]).unwrap();
        assert_eq!(s.enabled_at(0, &[a]), Some(0.0));
        assert_eq!(s.enabled_at(0, &[b]), Some(2.0));
    }

    #[test]
    fn empty_lhs_has_one_match() {
        let s = store("grammar G { species A[]; rule b: 0 -> A[] with 1; }");
        assert_eq!(s.match_count(0), 1);
    }
}
