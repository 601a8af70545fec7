//! Stochastic simulation: the hybrid continuous-time algorithm, the
//! discrete-time step semantics, time restoration, and path log-likelihood.

mod io;
pub mod ode;
mod replay;
mod sim;

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::Value;
use crate::model::Model;
use crate::store::{StoreError, TermId, TermRecord, TermStore};

pub use io::{read_jsonl, write_jsonl, TrajectoryIoError};
pub use replay::{restore_times, trajectory_loglik, LogLik};
pub use sim::{simulate_ct, simulate_dt};

/// Consecutive events at one clock value after which the run is treated as
/// having reached an accumulation point.
pub const STALL_LIMIT: u64 = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub t_max: f64,
    pub seed: u64,
    pub max_events: u64,
    pub ode_rel_tol: f64,
    pub ode_abs_tol: f64,
    /// Defaults to `1e-9 * t_max`.
    pub event_time_tol: Option<f64>,
    pub snapshot_dt: Option<f64>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            t_max: 1.0,
            seed: 0,
            max_events: 1_000_000,
            ode_rel_tol: 1e-6,
            ode_abs_tol: 1e-9,
            event_time_tol: None,
            snapshot_dt: None,
        }
    }
}

impl SimOptions {
    pub fn new(t_max: f64, seed: u64) -> Self {
        Self { t_max, seed, ..Self::default() }
    }

    pub fn event_tol(&self) -> f64 {
        self.event_time_tol.unwrap_or(1e-9 * self.t_max)
    }

    pub fn check(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::InvalidOptions(m.to_string()));
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return bad("t_max must be positive and finite");
        }
        if !(self.ode_rel_tol > 0.0 && self.ode_abs_tol > 0.0 && self.event_tol() > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.max_events < 1 {
            return bad("max_events must be at least 1");
        }
        if let Some(dt) = self.snapshot_dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad("snapshot_dt must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Ct,
    Dt,
    Restored,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    TMax,
    Extinction,
    EventCap,
    /// Discrete-time run finished its step budget.
    Steps,
    /// Run stopped by an engine error; see the error for details.
    Error,
}

/// One interaction: the rule, the terms it consumed (with their parameters
/// just before the event), the terms it produced, and its random draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: Option<f64>,
    pub rule: String,
    pub consumed: Vec<TermRecord>,
    pub produced: Vec<TermRecord>,
    pub draws: BTreeMap<String, Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub state: Vec<TermRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub grammar: String,
    pub grammar_hash: String,
    pub mode: Mode,
    pub seed: u64,
    pub replica: u64,
    /// Absent for discrete-time runs.
    pub options: Option<SimOptions>,
    pub n_steps: Option<u64>,
    pub initial: Vec<TermRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Footer {
    pub termination: Termination,
    pub t_end: Option<f64>,
    pub events: u64,
    pub final_a_tot: Option<f64>,
    pub final_state: Vec<TermRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub header: Header,
    pub events: Vec<Event>,
    pub snapshots: Vec<Snapshot>,
    pub footer: Footer,
}

impl Trajectory {
    /// Number of events with time at most `t`.
    pub fn events_until(&self, t: f64) -> usize {
        self.events.iter().take_while(|e| e.t.is_some_and(|x| x <= t)).count()
    }

    /// Terms present after the first `k` events, rebuilt from the event
    /// records. Parameters that flow keep their last logged values.
    pub fn state_after(&self, k: usize) -> Vec<TermRecord> {
        let mut terms: BTreeMap<u64, TermRecord> = self.header.initial.iter().map(|r| (r.id, r.clone())).collect();
        for ev in &self.events[..k] {
            for r in &ev.consumed {
                terms.remove(&r.id);
            }
            terms.extend(ev.produced.iter().map(|r| (r.id, r.clone())));
        }
        terms.into_values().collect()
    }
}

#[derive(Debug, Clone, Error)]
pub enum EngineError {
    #[error("event cap exceeded: {reason}")]
    EventCapExceeded { reason: String, partial: Box<Trajectory> },
    #[error("ODE solver failed at t = {t}: {message}")]
    OdeFailure { t: f64, message: String, partial: Box<Trajectory> },
    #[error("propensity of rule `{rule}` on {binding:?}: {message}")]
    Propensity { rule: String, binding: Vec<TermId>, message: String, partial: Option<Box<Trajectory>> },
    #[error("rewrite failed: {error}")]
    Rewrite { error: StoreError, partial: Box<Trajectory> },
    #[error("not a stochastic parameterized grammar: {0}")]
    NotAnSpg(String),
    #[error("replay mismatch at event {event}: {message}")]
    ReplayMismatch { event: usize, message: String },
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error("initial state: {0}")]
    InitialState(StoreError),
}

impl EngineError {
    /// Trajectory recorded up to the failure, if the run got started.
    pub fn partial(&self) -> Option<&Trajectory> {
        match self {
            EngineError::EventCapExceeded { partial, .. }
            | EngineError::OdeFailure { partial, .. }
            | EngineError::Rewrite { partial, .. } => Some(partial),
            EngineError::Propensity { partial, .. } => partial.as_deref(),
            _ => None,
        }
    }
}

/// One entry of an initial-state file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialTerm {
    pub species: String,
    #[serde(default)]
    pub params: Vec<Value>,
    #[serde(default = "one")]
    pub count: u64,
}

fn one() -> u64 {
    1
}

/// Builds the starting store; ids are assigned in file order from 0.
pub fn initial_store(model: &Arc<Model>, init: &[InitialTerm]) -> Result<TermStore, EngineError> {
    let mut store = TermStore::new(model.clone());
    for t in init {
        for _ in 0..t.count {
            store.insert(&t.species, t.params.clone()).map_err(EngineError::InitialState)?;
        }
    }
    Ok(store)
}

/// Runs `replicas` independent continuous-time simulations in parallel.
/// Replica `r` uses stream `r` of `opts.seed`; results are in replica order.
pub fn simulate_ensemble(
    model: &Arc<Model>,
    init: &[InitialTerm],
    opts: &SimOptions,
    replicas: u64,
) -> Vec<Result<Trajectory, EngineError>> {
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let store = initial_store(model, init)?;
            simulate_ct(store, opts, r)
        })
        .collect()
}
