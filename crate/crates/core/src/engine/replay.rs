use std::sync::Arc;

use serde::Serialize;

use super::ode::{Integrator, StepError};
use super::sim::{check_spg, final_a_tot, record, Dynamics, RhsError};
use super::{EngineError, Event, Footer, Header, Mode, SimOptions, Trajectory};
use crate::expr::Value;
use crate::model::{Model, RuleKind};
use crate::rng::RandomStream;
use crate::store::{TermId, TermRecord, TermStore};

/// Path log-likelihood and its parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LogLik {
    pub total: f64,
    /// Sum of log propensities of the fired matches.
    pub log_rates: f64,
    /// Sum of log densities (or masses) of the fresh draws.
    pub log_draws: f64,
    /// Integrated total propensity over the observation window.
    pub integral: f64,
    pub events: usize,
}

fn close(a: &Value, b: &Value) -> bool {
    let near = |x: f64, y: f64| (x - y).abs() <= 1e-4 * (1.0 + y.abs());
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => x == y,
        (Value::Vector(x), Value::Vector(y)) => x.len() == y.len() && x.iter().zip(y).all(|(x, y)| near(*x, *y)),
        (Value::Bool(x), Value::Bool(y)) => x == y,
        (x, y) => match (x.as_f64(), y.as_f64()) {
            (Some(x), Some(y)) => near(x, y),
            _ => false,
        },
    }
}

fn same_records(a: &[TermRecord], b: &[TermRecord]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.id == y.id
                && x.species == y.species
                && x.params.len() == y.params.len()
                && x.params.iter().zip(&y.params).all(|(p, q)| close(p, q))
        })
}

fn mismatch(event: usize, message: impl Into<String>) -> EngineError {
    EngineError::ReplayMismatch { event, message: message.into() }
}

fn rhs_error(dynm: &Dynamics, e: RhsError, event: usize) -> EngineError {
    match e {
        RhsError::Derivative { .. } => {
            let (rule, _, message) = dynm.error(e);
            mismatch(event, format!("flow of rule `{rule}` failed during replay: {message}"))
        }
        e => {
            let (rule, binding, message) = dynm.error(e);
            EngineError::Propensity { rule, binding, message, partial: None }
        }
    }
}

fn start(model: &Arc<Model>, header: &Header) -> Result<TermStore, EngineError> {
    if header.grammar_hash != model.hash {
        return Err(mismatch(0, "trajectory was produced by a different grammar"));
    }
    TermStore::from_dump(model.clone(), &header.initial, 0.0).map_err(|e| mismatch(0, e.to_string()))
}

/// Moves the store's continuous state from `t0` to `t1` and returns the
/// integrated total propensity. `event` labels errors.
fn advance(store: &mut TermStore, t0: f64, t1: f64, opts: &SimOptions, event: usize) -> Result<f64, EngineError> {
    let mut dynm = Dynamics::new(store);
    if dynm.is_static() {
        let a = dynm.propensities(t0).map_err(|e| rhs_error(&dynm, e, event))?;
        return Ok(a.iter().sum::<f64>() * (t1 - t0));
    }
    if t1 <= t0 {
        return Ok(0.0);
    }
    let lam = dynm.hazard_index();
    let y0 = dynm.initial_y();
    let step_error = |dynm: &Dynamics, e: StepError<RhsError>| match e {
        StepError::Rhs { error, .. } => rhs_error(dynm, error, event),
        StepError::Underflow { t, h } => mismatch(event, format!("step size underflow at t = {t} (h = {h:e})")),
    };
    let (rtol, atol, tol) = (opts.ode_rel_tol, opts.ode_abs_tol, opts.event_tol());
    let mut it = match Integrator::new(&mut dynm, t0, y0, rtol, atol, tol, t1 - t0) {
        Ok(it) => it,
        Err(e) => return Err(step_error(&dynm, e)),
    };
    while it.t < t1 {
        if let Err(e) = it.step(&mut dynm, t1) {
            return Err(step_error(&dynm, e));
        }
    }
    let y = it.y.clone();
    dynm.write_y(&y);
    Ok(y[lam])
}

/// Checks that `ev` can fire on `store` and pins the consumed parameters to
/// their recorded values. Returns the rule index and bound ids.
fn locate(store: &mut TermStore, ev: &Event, k: usize) -> Result<(usize, Vec<TermId>), EngineError> {
    let model = store.model().clone();
    let rule = model.rule_id(&ev.rule).ok_or_else(|| mismatch(k, format!("unknown rule `{}`", ev.rule)))?;
    if !model.rules[rule].is_jump() {
        return Err(mismatch(k, format!("rule `{}` is continuous", ev.rule)));
    }
    let ids: Vec<TermId> = ev.consumed.iter().map(|r| TermId(r.id)).collect();
    if store.enabled_at(rule, &ids).is_none() {
        return Err(mismatch(k, format!("rule `{}` has no match on {ids:?}", ev.rule)));
    }
    let live: Vec<TermRecord> = ids.iter().map(|id| record(store, *id)).collect();
    if !same_records(&live, &ev.consumed) {
        return Err(mismatch(k, "consumed terms differ from the replayed state"));
    }
    for rec in &ev.consumed {
        for (slot, v) in rec.params.iter().enumerate() {
            store.set_param(TermId(rec.id), slot, v.clone()).expect("live term");
        }
    }
    Ok((rule, ids))
}

/// Applies a recorded event and checks its products.
fn apply(store: &mut TermStore, rule: usize, ids: &[TermId], ev: &Event, k: usize) -> Result<(), EngineError> {
    let draws: Vec<(String, Value)> = ev.draws.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    let delta = store.apply_rewrite(rule, ids, &draws).map_err(|e| mismatch(k, e.to_string()))?;
    let produced: Vec<TermRecord> = delta.created.iter().map(|id| record(store, *id)).collect();
    if !same_records(&produced, &ev.produced) {
        return Err(mismatch(k, "produced terms differ from the log"));
    }
    Ok(())
}

/// Index of the jump match firing `rule` on `ids`.
fn match_index(dynm: &Dynamics, rule: usize, ids: &[TermId]) -> usize {
    dynm.jumps
        .iter()
        .position(|j| j.rule == rule && j.ids == ids)
        .expect("located match is live")
}

/// Log-likelihood of a timed trajectory: log propensities of the fired
/// matches plus log densities of their draws, minus the integrated total
/// propensity up to the footer's end time. Continuous parameters are
/// re-integrated between events.
pub fn trajectory_loglik(model: &Arc<Model>, traj: &Trajectory) -> Result<LogLik, EngineError> {
    let mut store = start(model, &traj.header)?;
    let opts = traj.header.options.clone().unwrap_or_default();
    let n = traj.events.len();
    let t_end = traj.footer.t_end.ok_or_else(|| mismatch(n, "trajectory has no end time"))?;
    let (mut log_rates, mut log_draws, mut integral) = (0.0, 0.0, 0.0);
    let mut t = 0.0;
    for (k, ev) in traj.events.iter().enumerate() {
        let te = ev.t.ok_or_else(|| mismatch(k, "event has no time"))?;
        if te < t {
            return Err(mismatch(k, "event times decrease"));
        }
        integral += advance(&mut store, t, te, &opts, k)?;
        store.set_time(te);
        let (rule, ids) = locate(&mut store, ev, k)?;
        let mut dynm = Dynamics::new(&mut store);
        let a = dynm.propensities(te).map_err(|e| rhs_error(&dynm, e, k))?;
        let ai = a[match_index(&dynm, rule, &ids)];
        if ai <= 0.0 {
            return Err(mismatch(k, format!("rule `{}` fired with zero propensity", ev.rule)));
        }
        log_rates += ai.ln();
        log_draws += draw_log_density(&store, rule, &ids, ev, k)?;
        apply(&mut store, rule, &ids, ev, k)?;
        t = te;
    }
    if t_end < t {
        return Err(mismatch(n, "end time precedes the last event"));
    }
    integral += advance(&mut store, t, t_end, &opts, n)?;
    if !same_records(&store.dump(), &traj.footer.final_state) {
        return Err(mismatch(n, "final state differs from the replayed state"));
    }
    Ok(LogLik { total: log_rates + log_draws - integral, log_rates, log_draws, integral, events: n })
}

fn draw_log_density(store: &TermStore, rule: usize, ids: &[TermId], ev: &Event, k: usize) -> Result<f64, EngineError> {
    let model = store.model();
    let RuleKind::Jump { fresh, .. } = &model.rules[rule].kind else {
        unreachable!("located rule is a jump")
    };
    if fresh.len() != ev.draws.len() {
        return Err(mismatch(k, "draws do not match the rule's fresh variables"));
    }
    let mut env = store.match_env(rule, ids).expect("live match");
    let mut total = 0.0;
    for fv in fresh {
        let v = ev
            .draws
            .get(&fv.name)
            .ok_or_else(|| mismatch(k, format!("missing draw `{}`", fv.name)))?;
        let d = fv.dist.resolve(&env).map_err(|e| mismatch(k, e.to_string()))?;
        total += d.log_density(v);
        env.bind(fv.name.clone(), v.clone());
    }
    Ok(total)
}

/// Assigns event times to a discrete-time trajectory: before each event the
/// clock advances by an exponential waiting time with the total propensity
/// of the current state as its rate.
pub fn restore_times(model: &Arc<Model>, traj: &Trajectory, seed: u64) -> Result<Trajectory, EngineError> {
    let mut store = start(model, &traj.header)?;
    check_spg(&store)?;
    let mut rng = RandomStream::for_replica(seed, traj.header.replica);
    let mut events = Vec::with_capacity(traj.events.len());
    let mut t = 0.0;
    for (k, ev) in traj.events.iter().enumerate() {
        let (rule, ids) = locate(&mut store, ev, k)?;
        let mut dynm = Dynamics::new(&mut store);
        let a = dynm.propensities(t).map_err(|e| rhs_error(&dynm, e, k))?;
        if a[match_index(&dynm, rule, &ids)] <= 0.0 {
            return Err(mismatch(k, format!("rule `{}` fired with zero propensity", ev.rule)));
        }
        let a_tot: f64 = a.iter().sum();
        t += rng.unit_exponential() / a_tot;
        store.set_time(t);
        apply(&mut store, rule, &ids, ev, k)?;
        events.push(Event { t: Some(t), ..ev.clone() });
    }
    if !same_records(&store.dump(), &traj.footer.final_state) {
        return Err(mismatch(events.len(), "final state differs from the replayed state"));
    }
    let header = Header { mode: Mode::Restored, seed, ..traj.header.clone() };
    let footer = Footer {
        termination: traj.footer.termination,
        t_end: Some(t),
        events: events.len() as u64,
        final_a_tot: final_a_tot(&mut store, t),
        final_state: store.dump(),
    };
    Ok(Trajectory { header, events, snapshots: Vec::new(), footer })
}
