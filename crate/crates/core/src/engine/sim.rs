use std::collections::BTreeMap;

use super::ode::{Integrator, OdeSystem, Step, StepError};
use super::{EngineError, Event, Footer, Header, Mode, SimOptions, Snapshot, Termination, Trajectory, STALL_LIMIT};
use crate::expr::{eval, eval_real, Env, EvalError, Value, AGE};
use crate::model::{CompiledRule, RuleKind, SlotTest};
use crate::rng::RandomStream;
use crate::store::{StoreError, TermId, TermRecord, TermStore};

/// A rule variable bound to a flowing parameter.
struct Flow {
    name: String,
    off: usize,
    /// `None` for a scalar.
    width: Option<usize>,
}

/// A match with its environment cached for repeated evaluation.
struct Bound {
    rule: usize,
    ids: Vec<TermId>,
    env: Env,
    flows: Vec<Flow>,
}

impl Bound {
    fn load(&mut self, y: &[f64]) {
        for f in &self.flows {
            match (self.env.get_mut(&f.name), f.width) {
                (Some(Value::Vector(v)), Some(w)) => v.copy_from_slice(&y[f.off..f.off + w]),
                (Some(v), None) => *v = Value::Real(y[f.off]),
                _ => unreachable!("flow bound to its variable"),
            }
        }
    }
}

pub(super) struct JumpMatch {
    pub rule: usize,
    pub ids: Vec<TermId>,
    enabled_at: f64,
    uses_age: bool,
    bound: Bound,
}

struct ContMatch {
    bound: Bound,
    /// Per derivative: offset and width in the state vector.
    targets: Vec<(usize, usize)>,
}

/// Failure inside a propensity or derivative evaluation.
#[derive(Debug)]
pub(super) enum RhsError {
    /// Jump match `i` has an effectively infinite hazard.
    Singular(usize),
    Propensity { idx: usize, message: String },
    Derivative { rule: usize, ids: Vec<TermId>, message: String },
}

type Layout = BTreeMap<(TermId, usize), (usize, usize)>;

fn bind(store: &TermStore, rule_idx: usize, rule: &CompiledRule, ids: &[TermId], layout: &Layout) -> Bound {
    let model = store.model();
    let vals = store.match_values(rule_idx, ids).expect("live match");
    let env = rule.env(&model.consts, &vals);
    let mut flows = Vec::new();
    for (p, id) in rule.lhs.iter().zip(ids) {
        for (slot, test) in p.slots.iter().enumerate() {
            if let (SlotTest::Bind(i), Some(&(off, width))) = (test, layout.get(&(*id, slot))) {
                let vector = matches!(vals[*i], Some(Value::Vector(_)));
                flows.push(Flow { name: rule.vars[*i].clone(), off, width: vector.then_some(width) });
            }
        }
    }
    Bound { rule: rule_idx, ids: ids.to_vec(), env, flows }
}

/// The piecewise-deterministic motion of a store between two events: the
/// continuous parameters plus the cumulative hazard as the last component.
pub(super) struct Dynamics<'a> {
    pub store: &'a mut TermStore,
    pub jumps: Vec<JumpMatch>,
    conts: Vec<ContMatch>,
    /// (term, slot, offset, width) of every flowing parameter.
    vars: Vec<(TermId, usize, usize, usize)>,
    n: usize,
}

impl<'a> Dynamics<'a> {
    pub fn new(store: &'a mut TermStore) -> Self {
        let model = store.model().clone();
        let mut layout = Layout::new();
        let mut vars = Vec::new();
        let mut n = 0;
        let mut cont_ids = Vec::new();
        for (r, rule) in model.rules.iter().enumerate() {
            let RuleKind::Continuous { derivatives } = &rule.kind else { continue };
            for (ids, _) in store.iter_matches(r) {
                let targets: Vec<(usize, usize)> = derivatives
                    .iter()
                    .map(|d| {
                        let id = ids[d.pattern];
                        *layout.entry((id, d.slot)).or_insert_with(|| {
                            let width = match &store.term(id).expect("live match").params[d.slot] {
                                Value::Vector(v) => v.len(),
                                _ => 1,
                            };
                            vars.push((id, d.slot, n, width));
                            n += width;
                            (n - width, width)
                        })
                    })
                    .collect();
                cont_ids.push((r, ids.to_vec(), targets));
            }
        }
        let conts = cont_ids
            .into_iter()
            .map(|(r, ids, targets)| ContMatch { bound: bind(store, r, &model.rules[r], &ids, &layout), targets })
            .collect();
        let mut jumps = Vec::new();
        for (r, rule) in model.rules.iter().enumerate() {
            let RuleKind::Jump { uses_age, .. } = &rule.kind else { continue };
            for (ids, enabled_at) in store.iter_matches(r) {
                let mut bound = bind(store, r, rule, ids, &layout);
                if *uses_age {
                    bound.env.bind(AGE, Value::Real(0.0));
                }
                jumps.push(JumpMatch { rule: r, ids: ids.to_vec(), enabled_at, uses_age: *uses_age, bound });
            }
        }
        Self { store, jumps, conts, vars, n }
    }

    /// No flow and no clock-dependent rates: the total rate is constant.
    pub fn is_static(&self) -> bool {
        self.conts.is_empty() && !self.jumps.iter().any(|j| j.uses_age)
    }

    pub fn hazard_index(&self) -> usize {
        self.n
    }

    pub fn initial_y(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.n + 1];
        for &(id, slot, off, width) in &self.vars {
            match &self.store.term(id).expect("live term").params[slot] {
                Value::Vector(v) => y[off..off + width].copy_from_slice(v),
                v => y[off] = v.as_f64().expect("numeric slot"),
            }
        }
        y
    }

    fn load(&mut self, y: &[f64]) {
        for j in &mut self.jumps {
            j.bound.load(y);
        }
        for c in &mut self.conts {
            c.bound.load(y);
        }
    }

    /// Moves the flowing parameters to `y`, in the store and in every cached
    /// environment.
    pub fn write_y(&mut self, y: &[f64]) {
        for &(id, slot, off, width) in &self.vars {
            let v = if matches!(self.store.term(id).expect("live term").params[slot], Value::Vector(_)) {
                Value::Vector(y[off..off + width].to_vec())
            } else {
                Value::Real(y[off])
            };
            self.store.set_param(id, slot, v).expect("live term");
        }
        self.load(y);
    }

    fn propensity(&mut self, idx: usize, t: f64) -> Result<f64, RhsError> {
        let model = self.store.model();
        let jm = &mut self.jumps[idx];
        let rule = &model.rules[jm.rule];
        let RuleKind::Jump { propensity, .. } = &rule.kind else {
            unreachable!("jump match of a continuous rule")
        };
        if jm.uses_age {
            *jm.bound.env.get_mut(AGE).expect("age bound") = Value::Real(t - jm.enabled_at);
        }
        match eval_real(propensity, &jm.bound.env) {
            Ok(a) => {
                let a = rule.multiplicity as f64 * a;
                if a.is_finite() && a >= 0.0 {
                    Ok(a)
                } else {
                    Err(RhsError::Propensity { idx, message: format!("propensity evaluated to {a}") })
                }
            }
            Err(EvalError::SurvivorUnderflow { .. }) => Err(RhsError::Singular(idx)),
            Err(e) => Err(RhsError::Propensity { idx, message: e.to_string() }),
        }
    }

    /// Every jump propensity at time `t`, in match order.
    pub fn propensities(&mut self, t: f64) -> Result<Vec<f64>, RhsError> {
        (0..self.jumps.len()).map(|i| self.propensity(i, t)).collect()
    }

    pub fn error(&self, e: RhsError) -> (String, Vec<TermId>, String) {
        let model = self.store.model();
        match e {
            RhsError::Singular(i) => {
                let j = &self.jumps[i];
                (model.rules[j.rule].name.clone(), j.ids.clone(), "infinite hazard".into())
            }
            RhsError::Propensity { idx, message } => {
                let j = &self.jumps[idx];
                (model.rules[j.rule].name.clone(), j.ids.clone(), message)
            }
            RhsError::Derivative { rule, ids, message } => (model.rules[rule].name.clone(), ids, message),
        }
    }
}

impl OdeSystem for Dynamics<'_> {
    type Error = RhsError;

    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), RhsError> {
        self.load(y);
        dy.fill(0.0);
        let model = self.store.model().clone();
        for cm in &self.conts {
            let rule = &model.rules[cm.bound.rule];
            let RuleKind::Continuous { derivatives } = &rule.kind else {
                unreachable!("continuous match of a jump rule")
            };
            let fail = |message: String| RhsError::Derivative {
                rule: cm.bound.rule,
                ids: cm.bound.ids.clone(),
                message,
            };
            let m = rule.multiplicity as f64;
            for (d, &(off, width)) in derivatives.iter().zip(&cm.targets) {
                match eval(&d.rhs, &cm.bound.env).map_err(|e| fail(e.to_string()))? {
                    Value::Vector(v) if v.len() == width => {
                        for (k, x) in v.iter().enumerate() {
                            dy[off + k] += m * x;
                        }
                    }
                    v => match v.as_f64() {
                        Some(x) if width == 1 => dy[off] += m * x,
                        _ => return Err(fail(format!("derivative value {v} does not fit its target"))),
                    },
                }
                if dy[off..off + width].iter().any(|x| !x.is_finite()) {
                    return Err(fail("non-finite derivative".into()));
                }
            }
        }
        let mut a_tot = 0.0;
        for i in 0..self.jumps.len() {
            a_tot += self.propensity(i, t)?;
        }
        dy[self.n] = a_tot;
        Ok(())
    }
}

/// Index of the match chosen by `u` with probability proportional to `a`.
pub(super) fn select(a: &[f64], u: f64) -> usize {
    let total: f64 = a.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, ai) in a.iter().enumerate() {
        if *ai > 0.0 {
            last = i;
            acc += ai;
            if target < acc {
                return i;
            }
        }
    }
    last
}

pub(super) fn record(store: &TermStore, id: TermId) -> TermRecord {
    let t = store.term(id).expect("live term");
    TermRecord { id: id.0, species: store.model().species[t.species].name.clone(), params: t.params.clone() }
}

/// Draws the rule's fresh variables and applies the rewrite.
fn fire(
    store: &mut TermStore,
    rule: usize,
    ids: &[TermId],
    t: Option<f64>,
    rng: &mut RandomStream,
) -> Result<Event, StoreError> {
    let model = store.model().clone();
    let r = &model.rules[rule];
    let RuleKind::Jump { fresh, .. } = &r.kind else {
        unreachable!("firing a continuous rule")
    };
    let mut env = store
        .match_env(rule, ids)
        .ok_or_else(|| StoreError::StaleMatch { rule: r.name.clone() })?;
    let domain = |e: EvalError| StoreError::Domain { rule: r.name.clone(), message: e.to_string() };
    let mut draws = Vec::with_capacity(fresh.len());
    for fv in fresh {
        let d = fv.dist.resolve(&env).map_err(domain)?;
        let v = if fv.vector { d.sample_vector(model.dim, rng).map_err(domain)? } else { d.sample(rng) };
        env.bind(fv.name.clone(), v.clone());
        draws.push((fv.name.clone(), v));
    }
    let consumed = ids.iter().map(|id| record(store, *id)).collect();
    let delta = store.apply_rewrite(rule, ids, &draws)?;
    let produced = delta.created.iter().map(|id| record(store, *id)).collect();
    Ok(Event { t, rule: r.name.clone(), consumed, produced, draws: draws.into_iter().collect() })
}

pub(super) fn final_a_tot(store: &mut TermStore, t: f64) -> Option<f64> {
    Dynamics::new(store).propensities(t).ok().map(|a| a.iter().sum())
}

/// Accumulates the output of one run.
pub(super) struct Recorder {
    header: Header,
    pub events: Vec<Event>,
    snapshots: Vec<Snapshot>,
    snapshot_dt: Option<f64>,
    next_k: u64,
    t_max: f64,
}

impl Recorder {
    pub fn new(header: Header) -> Self {
        let (snapshot_dt, t_max) = match &header.options {
            Some(o) => (o.snapshot_dt, o.t_max),
            None => (None, 0.0),
        };
        Self { header, events: Vec::new(), snapshots: Vec::new(), snapshot_dt, next_k: 0, t_max }
    }

    fn pending(&self) -> Option<f64> {
        let dt = self.snapshot_dt?;
        let g = self.next_k as f64 * dt;
        (g <= self.t_max * (1.0 + 1e-12)).then(|| g.min(self.t_max))
    }

    /// Emits every pending grid point accepted by `take`, with the state
    /// produced by `state`.
    fn snap_while(&mut self, take: impl Fn(f64) -> bool, mut state: impl FnMut(f64) -> Vec<TermRecord>) {
        while let Some(g) = self.pending().filter(|g| take(*g)) {
            self.snapshots.push(Snapshot { t: g, state: state(g) });
            self.next_k += 1;
        }
    }

    pub fn finish(self, store: &mut TermStore, termination: Termination, t_end: Option<f64>) -> Trajectory {
        let events = self.events.len() as u64;
        let final_a_tot = final_a_tot(store, t_end.unwrap_or(store.time()));
        Trajectory {
            header: self.header,
            events: self.events,
            snapshots: self.snapshots,
            footer: Footer { termination, t_end, events, final_a_tot, final_state: store.dump() },
        }
    }
}

enum Outcome {
    Fire { t: f64, rule: usize, ids: Vec<TermId> },
    /// The total rate vanished exactly at the crossing; start over from `t`.
    Redraw { t: f64 },
    End(Termination),
}

enum Fail {
    Ode { t: f64, message: String },
    Propensity { rule: String, binding: Vec<TermId>, message: String },
}

fn dense_dump(dynm: &mut Dynamics, step: &Step, g: f64) -> Vec<TermRecord> {
    dynm.write_y(&step.dense(g));
    dynm.store.dump()
}

/// Runs from `t0` until the next event or the end of the horizon.
fn segment(
    store: &mut TermStore,
    t0: f64,
    h_star: f64,
    opts: &SimOptions,
    rec: &mut Recorder,
    rng: &mut RandomStream,
) -> Result<Outcome, Fail> {
    let t_max = opts.t_max;
    let mut dynm = Dynamics::new(store);
    let prop_fail = |dynm: &Dynamics, e: RhsError| {
        let (rule, binding, message) = dynm.error(e);
        Fail::Propensity { rule, binding, message }
    };
    let forced = |dynm: &Dynamics, i: usize, t: f64| {
        let j = &dynm.jumps[i];
        Outcome::Fire { t, rule: j.rule, ids: j.ids.clone() }
    };
    // Picks the event at `t` with the state already in the store.
    let choose = |dynm: &mut Dynamics, t: f64, rng: &mut RandomStream| match dynm.propensities(t) {
        Ok(a) if a.iter().sum::<f64>() > 0.0 => {
            let j = &dynm.jumps[select(&a, rng.uniform())];
            Ok(Outcome::Fire { t, rule: j.rule, ids: j.ids.clone() })
        }
        Ok(_) => Ok(Outcome::Redraw { t }),
        Err(RhsError::Singular(i)) => Ok(forced(dynm, i, t)),
        Err(e) => Err(prop_fail(dynm, e)),
    };

    if dynm.is_static() {
        let a = match dynm.propensities(t0) {
            Ok(a) => a,
            Err(RhsError::Singular(i)) => return Ok(forced(&dynm, i, t0)),
            Err(e) => return Err(prop_fail(&dynm, e)),
        };
        let a_tot: f64 = a.iter().sum();
        let store = &*dynm.store;
        if a_tot == 0.0 {
            rec.snap_while(|_| true, |_| store.dump());
            return Ok(Outcome::End(Termination::Extinction));
        }
        let t1 = t0 + h_star / a_tot;
        if t1 > t_max {
            rec.snap_while(|_| true, |_| store.dump());
            return Ok(Outcome::End(Termination::TMax));
        }
        rec.snap_while(|g| g < t1, |_| store.dump());
        let j = &dynm.jumps[select(&a, rng.uniform())];
        return Ok(Outcome::Fire { t: t1, rule: j.rule, ids: j.ids.clone() });
    }

    let lam = dynm.hazard_index();
    let tol = opts.event_tol();
    let y0 = dynm.initial_y();
    let mut it = match Integrator::new(&mut dynm, t0, y0.clone(), opts.ode_rel_tol, opts.ode_abs_tol, tol, t_max - t0) {
        Ok(it) => it,
        Err(StepError::Rhs { error: RhsError::Singular(i), .. }) => {
            dynm.write_y(&y0);
            return Ok(forced(&dynm, i, t0));
        }
        Err(StepError::Rhs { error, .. }) => return Err(prop_or_ode(&dynm, error, t0)),
        Err(StepError::Underflow { t, h }) => {
            return Err(Fail::Ode { t, message: format!("step size underflow (h = {h:e})") })
        }
    };
    loop {
        match it.step(&mut dynm, t_max) {
            Ok(step) => {
                if step.y1[lam] >= h_star {
                    let (mut lo, mut hi) = (step.t0, step.t1);
                    while hi - lo > tol {
                        let mid = 0.5 * (lo + hi);
                        if mid <= lo || mid >= hi {
                            break;
                        }
                        if step.dense_component(mid, lam) >= h_star {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    rec.snap_while(|g| g < hi, |g| dense_dump(&mut dynm, &step, g));
                    dynm.write_y(&step.dense(hi));
                    return choose(&mut dynm, hi, rng);
                }
                rec.snap_while(|g| g <= step.t1, |g| dense_dump(&mut dynm, &step, g));
                if step.t1 >= t_max {
                    dynm.write_y(&step.y1);
                    return Ok(Outcome::End(Termination::TMax));
                }
            }
            Err(StepError::Rhs { t, error: RhsError::Singular(i) }) => {
                let y = it.y.clone();
                dynm.write_y(&y);
                return Ok(forced(&dynm, i, t));
            }
            Err(StepError::Rhs { t, error }) => return Err(prop_or_ode(&dynm, error, t)),
            Err(StepError::Underflow { t, h }) => {
                return Err(Fail::Ode { t, message: format!("step size underflow (h = {h:e})") })
            }
        }
    }
}

fn prop_or_ode(dynm: &Dynamics, e: RhsError, t: f64) -> Fail {
    match e {
        RhsError::Derivative { .. } => {
            let (rule, _, message) = dynm.error(e);
            Fail::Ode { t, message: format!("rule `{rule}`: {message}") }
        }
        e => {
            let (rule, binding, message) = dynm.error(e);
            Fail::Propensity { rule, binding, message }
        }
    }
}

fn header(store: &TermStore, mode: Mode, seed: u64, replica: u64, options: Option<SimOptions>, n_steps: Option<u64>) -> Header {
    let model = store.model();
    Header {
        grammar: model.grammar.name.clone(),
        grammar_hash: model.hash.clone(),
        mode,
        seed,
        replica,
        options,
        n_steps,
        initial: store.dump(),
    }
}

/// Continuous-time simulation of one replica from `store` up to `opts.t_max`.
pub fn simulate_ct(mut store: TermStore, opts: &SimOptions, replica: u64) -> Result<Trajectory, EngineError> {
    opts.check()?;
    let mut rng = RandomStream::for_replica(opts.seed, replica);
    let mut rec = Recorder::new(header(&store, Mode::Ct, opts.seed, replica, Some(opts.clone()), None));
    let mut t = store.time();
    let mut stall = 0u64;
    loop {
        let h_star = rng.unit_exponential();
        let outcome = match segment(&mut store, t, h_star, opts, &mut rec, &mut rng) {
            Ok(o) => o,
            Err(fail) => {
                let partial = Box::new(rec.finish(&mut store, Termination::Error, Some(t)));
                return Err(match fail {
                    Fail::Ode { t, message } => EngineError::OdeFailure { t, message, partial },
                    Fail::Propensity { rule, binding, message } => {
                        EngineError::Propensity { rule, binding, message, partial: Some(partial) }
                    }
                });
            }
        };
        match outcome {
            Outcome::End(term) => return Ok(rec.finish(&mut store, term, Some(opts.t_max))),
            Outcome::Redraw { t: t1 } => {
                t = t1;
                store.set_time(t);
            }
            Outcome::Fire { t: t1, rule, ids } => {
                if rec.events.len() as u64 >= opts.max_events {
                    let reason = format!("more than {} events before t = {}", opts.max_events, opts.t_max);
                    let partial = Box::new(rec.finish(&mut store, Termination::EventCap, Some(t1)));
                    return Err(EngineError::EventCapExceeded { reason, partial });
                }
                stall = if rec.events.last().and_then(|e| e.t) == Some(t1) { stall + 1 } else { 0 };
                t = t1;
                store.set_time(t);
                match fire(&mut store, rule, &ids, Some(t), &mut rng) {
                    Ok(ev) => rec.events.push(ev),
                    Err(error) => {
                        let partial = Box::new(rec.finish(&mut store, Termination::Error, Some(t)));
                        return Err(EngineError::Rewrite { error, partial });
                    }
                }
                if stall + 1 >= STALL_LIMIT {
                    let reason = format!("{STALL_LIMIT} consecutive events without the clock advancing past t = {t}");
                    let partial = Box::new(rec.finish(&mut store, Termination::EventCap, Some(t)));
                    return Err(EngineError::EventCapExceeded { reason, partial });
                }
            }
        }
    }
}

/// Discrete-time run: `n_steps` rule applications chosen with probability
/// proportional to propensity, without event times.
pub fn simulate_dt(mut store: TermStore, n_steps: u64, seed: u64, replica: u64) -> Result<Trajectory, EngineError> {
    check_spg(&store)?;
    let mut rng = RandomStream::for_replica(seed, replica);
    let mut rec = Recorder::new(header(&store, Mode::Dt, seed, replica, None, Some(n_steps)));
    for _ in 0..n_steps {
        let mut dynm = Dynamics::new(&mut store);
        let a = match dynm.propensities(0.0) {
            Ok(a) => a,
            Err(e) => {
                let (rule, binding, message) = dynm.error(e);
                let partial = Some(Box::new(rec.finish(&mut store, Termination::Error, None)));
                return Err(EngineError::Propensity { rule, binding, message, partial });
            }
        };
        if a.iter().sum::<f64>() == 0.0 {
            return Ok(rec.finish(&mut store, Termination::Extinction, None));
        }
        let j = &dynm.jumps[select(&a, rng.uniform())];
        let (rule, ids) = (j.rule, j.ids.clone());
        match fire(&mut store, rule, &ids, None, &mut rng) {
            Ok(ev) => rec.events.push(ev),
            Err(error) => {
                let partial = Box::new(rec.finish(&mut store, Termination::Error, None));
                return Err(EngineError::Rewrite { error, partial });
            }
        }
    }
    Ok(rec.finish(&mut store, Termination::Steps, None))
}

pub(super) fn check_spg(store: &TermStore) -> Result<(), EngineError> {
    let model = store.model();
    if model.has_continuous() {
        return Err(EngineError::NotAnSpg("the grammar has continuous rules".into()));
    }
    if model.uses_age() {
        return Err(EngineError::NotAnSpg("a propensity reads `age`".into()));
    }
    Ok(())
}
